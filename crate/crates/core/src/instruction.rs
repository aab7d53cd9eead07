//! Folding instructions in plain English mapped to ordered fold stages.
//!
//! Matching is rule based: text is normalized, split on ordering cues and
//! conjunctions, and each segment is matched to the predefined description
//! sharing the most keywords with it after synonym folding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FoldError, Result};
use crate::garment::{default_stage_ids, Category, StageId};

/// Paraphrase matches scoring below this are rejected.
pub const MATCH_THRESHOLD: f64 = 0.34;

/// Built-in lexicon, in the same format as lexicon files.
pub const DEFAULT_LEXICON: &str = "\
# Lexicon: one `pattern<TAB>meaning` entry per line.
#   meaning = stage id      predefined description of that stage
#   meaning = =word         synonym folded onto `word`
#   meaning = category:NAME garment phrase (NAME = any for generic words)
#   meaning = cue           ordering cue or conjunction, splits segments
#   meaning = stop          filler word ignored when matching

fold the left sleeve\tLeftSleeve
fold the left sleeve onto the body\tLeftSleeve
fold the left sleeve inward\tLeftSleeve
fold the right sleeve\tRightSleeve
fold the right sleeve onto the body\tRightSleeve
fold the right sleeve inward\tRightSleeve
fold the bottom up\tBottomUp
fold the bottom up to the top\tBottomUp
fold the garment in half from the bottom\tBottomUp
fold the left leg onto the right leg\tLeftLegOntoRight
fold the left leg over\tLeftLegOntoRight
fold one leg over the other\tLeftLegOntoRight

arm\t=sleeve
arms\t=sleeve
sleeves\t=sleeve
hem\t=bottom
lower\t=bottom
base\t=bottom
legs\t=leg
upward\t=up
upwards\t=up
top\t=up
collar\t=up
neckline\t=up

vest\tcategory:no-sleeve
tank top\tcategory:no-sleeve
sleeveless shirt\tcategory:no-sleeve
t shirt\tcategory:short-sleeve
tshirt\tcategory:short-sleeve
tee\tcategory:short-sleeve
short sleeve shirt\tcategory:short-sleeve
long sleeve shirt\tcategory:long-sleeve
sweater\tcategory:long-sleeve
jumper\tcategory:long-sleeve
hoodie\tcategory:long-sleeve
pants\tcategory:pants
trousers\tcategory:pants
jeans\tcategory:pants
shirt\tcategory:any
garment\tcategory:any
clothes\tcategory:any
cloth\tcategory:any

first\tcue
then\tcue
next\tcue
after that\tcue
afterwards\tcue
finally\tcue
lastly\tcue
and\tcue
followed by\tcue
second\tcue
third\tcue

the\tstop
a\tstop
an\tstop
fold\tstop
folding\tstop
tuck\tstop
bring\tstop
flip\tstop
lift\tstop
put\tstop
move\tstop
take\tstop
please\tstop
it\tstop
its\tstop
of\tstop
to\tstop
onto\tstop
on\tstop
over\tstop
in\tstop
into\tstop
inward\tstop
inwards\tstop
toward\tstop
towards\tstop
across\tstop
side\tstop
part\tstop
half\tstop
body\tstop
middle\tstop
center\tstop
centre\tstop
from\tstop
with\tstop
your\tstop
my\tstop
now\tstop
one\tstop
other\tstop
";

#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    pub raw: String,
    pub stages: Vec<StageId>,
    pub category_hint: Option<Category>,
}

/// Best predefined description for a text; `score` is the token-set
/// Jaccard similarity.
#[derive(Clone, Debug, PartialEq)]
pub struct ParaphraseMatch {
    pub phrase: String,
    pub stage: StageId,
    pub score: f64,
}

impl ParaphraseMatch {
    pub fn accepted(&self) -> bool {
        self.score >= MATCH_THRESHOLD
    }
}

#[derive(Clone, Debug)]
struct Description {
    phrase: String,
    stage: StageId,
    keys: BTreeSet<String>,
}

#[derive(Clone, Debug)]
enum Phrase {
    Cue,
    /// `None` for generic garment words.
    Garment(Option<Category>),
}

#[derive(Clone, Debug)]
pub struct Lexicon {
    descriptions: Vec<Description>,
    synonyms: BTreeMap<String, String>,
    stopwords: BTreeSet<String>,
    /// Multi-token phrases (cues and garments), longest first.
    phrases: Vec<(Vec<String>, Phrase)>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(DEFAULT_LEXICON).expect("built-in lexicon is valid")
    }
}

/// Lowercase, punctuation to spaces, whitespace split.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

impl Lexicon {
    pub fn load(path: &Path) -> Result<Lexicon> {
        Lexicon::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Lexicon> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let body = line.trim_end_matches(['\n', '\r']);
            let at = offset;
            offset += line.len();
            if body.trim().is_empty() || body.trim_start().starts_with('#') {
                continue;
            }
            let (pattern, meaning) = body
                .split_once('\t')
                .ok_or_else(|| FoldError::Parse { offset: at, message: "expected `pattern<TAB>meaning`".into() })?;
            if tokenize(pattern).join(" ") != pattern {
                return Err(FoldError::Parse {
                    offset: at,
                    message: format!("pattern `{pattern}` must be lowercase words without punctuation"),
                });
            }
            entries.push((at, pattern.to_string(), meaning.trim().to_string()));
        }

        let mut lex =
            Lexicon { descriptions: Vec::new(), synonyms: BTreeMap::new(), stopwords: BTreeSet::new(), phrases: Vec::new() };
        // Synonyms and stopwords first: descriptions are keyed through them.
        for (at, pattern, meaning) in &entries {
            if let Some(target) = meaning.strip_prefix('=') {
                if pattern.contains(' ') {
                    return Err(FoldError::Parse { offset: *at, message: "synonyms are single words".into() });
                }
                lex.synonyms.insert(pattern.clone(), target.to_string());
            } else if meaning == "stop" {
                lex.stopwords.insert(pattern.clone());
            }
        }
        let mut seen: BTreeMap<String, StageId> = BTreeMap::new();
        for (at, pattern, meaning) in &entries {
            if meaning.starts_with('=') || meaning == "stop" {
                continue;
            }
            let words = lex.canonical_tokens(&tokenize(pattern));
            if meaning == "cue" {
                lex.phrases.push((words, Phrase::Cue));
            } else if let Some(name) = meaning.strip_prefix("category:") {
                let cat = match name {
                    "any" => None,
                    other => Some(other.parse::<Category>().map_err(|_| FoldError::Parse {
                        offset: *at,
                        message: format!("unknown category `{other}`"),
                    })?),
                };
                lex.phrases.push((words, Phrase::Garment(cat)));
            } else {
                let stage: StageId = meaning
                    .parse()
                    .map_err(|_| FoldError::Parse { offset: *at, message: format!("unknown stage id `{meaning}`") })?;
                if let Some(prev) = seen.insert(pattern.clone(), stage) {
                    if prev != stage {
                        return Err(FoldError::Parse {
                            offset: *at,
                            message: format!("`{pattern}` maps to both {prev} and {stage}"),
                        });
                    }
                    continue;
                }
                let keys = lex.keys(&words);
                lex.descriptions.push(Description { phrase: pattern.clone(), stage, keys });
            }
        }
        lex.phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        if lex.descriptions.is_empty() {
            return Err(FoldError::Parse { offset: text.len(), message: "lexicon has no descriptions".into() });
        }
        Ok(lex)
    }

    fn canonical_tokens(&self, tokens: &[String]) -> Vec<String> {
        tokens.iter().map(|t| self.synonyms.get(t).cloned().unwrap_or_else(|| t.clone())).collect()
    }

    /// Content words of already canonical tokens.
    fn keys(&self, words: &[String]) -> BTreeSet<String> {
        words.iter().filter(|w| !self.stopwords.contains(*w)).cloned().collect()
    }

    /// Predefined descriptions of a stage, in lexicon order.
    pub fn descriptions_for(&self, stage: StageId) -> Vec<&str> {
        self.descriptions.iter().filter(|d| d.stage == stage).map(|d| d.phrase.as_str()).collect()
    }

    /// All predefined descriptions with their stages.
    pub fn descriptions(&self) -> impl Iterator<Item = (&str, StageId)> {
        self.descriptions.iter().map(|d| (d.phrase.as_str(), d.stage))
    }

    /// Best description by Jaccard similarity of content words.
    pub fn paraphrase_match(&self, text: &str) -> ParaphraseMatch {
        let words = self.canonical_tokens(&tokenize(text));
        let keys = self.keys(&words);
        let mut best: Option<(&Description, f64)> = None;
        for d in &self.descriptions {
            let score = jaccard(&keys, &d.keys);
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((d, score));
            }
        }
        let (d, score) = best.expect("lexicon has descriptions");
        ParaphraseMatch { phrase: d.phrase.clone(), stage: d.stage, score }
    }

    /// Ordered stages named by `text` for a garment of `category`.
    pub fn parse_instruction(&self, text: &str, category: Category) -> Result<Instruction> {
        if text.trim().is_empty() {
            return Err(FoldError::EmptyInput);
        }
        let mut hint: Option<Category> = None;
        let mut garment_named = false;
        let mut stages = Vec::new();
        let mut unmatched = Vec::new();

        for segment in self.segments(text) {
            let mut content = Vec::new();
            let mut i = 0;
            while i < segment.len() {
                if let Some((len, cat)) = self.garment_at(&segment, i) {
                    garment_named = true;
                    if cat.is_some() {
                        hint = cat;
                    }
                    i += len;
                    continue;
                }
                content.push(segment[i].clone());
                i += 1;
            }
            let keys = self.keys(&content);
            if keys.is_empty() {
                // Fillers only ("fold it") or a garment name.
                if !garment_named && !segment.is_empty() {
                    unmatched.push(segment.join(" "));
                }
                continue;
            }
            match self.match_segment(&keys, category) {
                Some(stage) => stages.push(stage),
                None => unmatched.push(segment.join(" ")),
            }
        }

        if !unmatched.is_empty() {
            return Err(FoldError::UnknownInstruction(unmatched));
        }
        if let Some(h) = hint {
            if h != category {
                return Err(FoldError::CategoryMismatch { stage: format!("garment `{h}`"), category: category.to_string() });
            }
        }
        if stages.is_empty() {
            if !garment_named {
                return Err(FoldError::UnknownInstruction(vec![text.trim().to_string()]));
            }
            stages = default_stage_ids(category);
        }
        if let Some(bad) = stages.iter().find(|s| !s.valid_for(category)) {
            return Err(FoldError::CategoryMismatch { stage: bad.to_string(), category: category.to_string() });
        }
        Ok(Instruction { raw: text.to_string(), stages, category_hint: hint })
    }

    /// Canonical text for a stage sequence; parses back to the same stages.
    pub fn canonical_text(&self, stages: &[StageId]) -> String {
        let mut out = String::new();
        for (i, s) in stages.iter().enumerate() {
            if i > 0 {
                out.push_str(", then ");
            }
            let phrase = self.descriptions_for(*s).first().copied().unwrap_or("");
            let _ = write!(out, "{phrase}");
        }
        out
    }

    /// Canonical token runs between cues and punctuation.
    fn segments(&self, text: &str) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for chunk in text.split([',', ';', '.', '!', '?', ':']) {
            let words = self.canonical_tokens(&tokenize(chunk));
            let mut current = Vec::new();
            let mut i = 0;
            while i < words.len() {
                if let Some(len) = self.cue_at(&words, i) {
                    if !current.is_empty() {
                        out.push(std::mem::take(&mut current));
                    }
                    i += len;
                    continue;
                }
                current.push(words[i].clone());
                i += 1;
            }
            if !current.is_empty() {
                out.push(current);
            }
        }
        out
    }

    fn phrase_at(&self, words: &[String], i: usize) -> Option<(usize, &Phrase)> {
        self.phrases
            .iter()
            .find(|(p, _)| words.len() - i >= p.len() && words[i..i + p.len()] == p[..])
            .map(|(p, kind)| (p.len(), kind))
    }

    fn cue_at(&self, words: &[String], i: usize) -> Option<usize> {
        match self.phrase_at(words, i) {
            Some((len, Phrase::Cue)) => Some(len),
            _ => None,
        }
    }

    fn garment_at(&self, words: &[String], i: usize) -> Option<(usize, Option<Category>)> {
        match self.phrase_at(words, i) {
            Some((len, Phrase::Garment(cat))) => Some((len, *cat)),
            _ => None,
        }
    }

    /// Stage with the largest keyword overlap, preferring stages valid for
    /// the category; ties go to higher Jaccard, then lexicon order.
    fn match_segment(&self, keys: &BTreeSet<String>, category: Category) -> Option<StageId> {
        let best = |valid_only: bool| {
            let mut best: Option<(&Description, usize, f64)> = None;
            for d in self.descriptions.iter().filter(|d| !valid_only || d.stage.valid_for(category)) {
                let overlap = keys.intersection(&d.keys).count();
                if overlap == 0 {
                    continue;
                }
                let j = jaccard(keys, &d.keys);
                if best.map_or(true, |(_, o, bj)| overlap > o || (overlap == o && j > bj)) {
                    best = Some((d, overlap, j));
                }
            }
            best.map(|(d, _, _)| d.stage)
        };
        best(true).or_else(|| best(false))
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// [`Lexicon::parse_instruction`] with the built-in lexicon.
pub fn parse(text: &str, category: Category) -> Result<Instruction> {
    Lexicon::default().parse_instruction(text, category)
}

/// [`Lexicon::paraphrase_match`] with the built-in lexicon.
pub fn paraphrase_match(text: &str) -> ParaphraseMatch {
    Lexicon::default().paraphrase_match(text)
}
