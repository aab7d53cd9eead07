//! Cross-module behaviour through the public API.

use garmentfold::config;
use garmentfold::dataset::{generate_dataset, Manifest, Recipe, TrajectoryRecord};
use garmentfold::executor::{run_episode, run_episode_full, EpisodeConfig, EpisodeLog, Mode};
use garmentfold::garment::{Category, GarmentSpec, StageId};
use garmentfold::instruction::{Lexicon, DEFAULT_LEXICON};
use garmentfold::metrics::evaluate;

#[test]
fn vest_episode_is_deterministic_and_scored_consistently() {
    let spec = GarmentSpec::jittered(Category::NoSleeve, 3);
    let config = EpisodeConfig::default();
    let lexicon = Lexicon::default();
    let a = run_episode_full(&spec, "fold the vest", &config, &lexicon).unwrap();
    let (report, log) = run_episode(&spec, "fold the vest", &config, &lexicon).unwrap();
    assert_eq!(a.report, report);
    assert_eq!(a.log, log);
    assert_eq!(log.stages.iter().map(|s| s.stage).collect::<Vec<_>>(), [StageId::BottomUp]);
    assert!(report.area_ratio < 0.8, "the bottom never came up: {report:?}");

    let again = evaluate(&a.initial, &a.final_positions, &a.goal, &a.mesh.triangles, &config.thresholds).unwrap();
    assert_eq!(again, report);
    assert_eq!(EpisodeLog::from_lines(&log.to_lines()).unwrap(), log);
}

#[test]
fn open_loop_spends_fewer_observations_than_closed_loop() {
    let spec = GarmentSpec::default_for(Category::NoSleeve);
    let lexicon = Lexicon::default();
    let closed = EpisodeConfig::default();
    let open = EpisodeConfig { mode: Mode::OpenLoop, ..closed.clone() };
    let (_, closed_log) = run_episode(&spec, "fold the bottom up", &closed, &lexicon).unwrap();
    let (_, open_log) = run_episode(&spec, "fold the bottom up", &open, &lexicon).unwrap();
    let distinct = |log: &EpisodeLog| {
        let mut hashes: Vec<u64> = log.actions.iter().map(|a| a.observation_hash).collect();
        hashes.dedup();
        hashes.len()
    };
    assert_eq!(distinct(&open_log), 1);
    assert!(distinct(&closed_log) >= 1);
    assert!(closed_log.actions.len() <= closed.budget);
}

#[test]
fn config_file_drives_an_episode() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fold.cfg");
    std::fs::write(&path, "episode.budget=2\nthresholds.max_area_ratio=0.9\n").unwrap();
    let config = config::load(&path).unwrap();
    let spec = GarmentSpec::default_for(Category::Pants);
    let (_, log) = run_episode(&spec, "fold the left leg over", &config, &Lexicon::default()).unwrap();
    assert!(log.actions.len() <= 2);
}

#[test]
fn lexicon_file_extends_the_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom.lex");
    std::fs::write(&path, format!("{DEFAULT_LEXICON}tuck the cuff\tLeftSleeve\nwrist\t=cuff\n")).unwrap();
    let lexicon = Lexicon::load(&path).unwrap();
    let parsed = lexicon.parse_instruction("tuck the wrist, then fold the bottom up", Category::LongSleeve).unwrap();
    assert_eq!(parsed.stages, [StageId::LeftSleeve, StageId::BottomUp]);
    assert!(Lexicon::default().parse_instruction("tuck the wrist", Category::LongSleeve).is_err());
}

#[test]
fn small_dataset_reads_back_through_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut recipe = Recipe::uniform(1);
    recipe.n_points = 48;
    recipe.frames_per_stage = 5;
    let manifest = generate_dataset(&recipe, dir.path(), &Lexicon::default()).unwrap();
    let reread = Manifest::read(dir.path()).unwrap();
    assert_eq!(reread, manifest);
    reread.verify(dir.path()).unwrap();
    for (id, split) in &reread.records {
        let record = TrajectoryRecord::read(&Manifest::record_path(dir.path(), id)).unwrap();
        assert_eq!(record.split, *split);
        assert_eq!(record.n_frames, 5 * record.stages.len());
        assert_eq!(record.frames.len(), record.n_frames * 48 * 3);
        assert!(!record.annotations.is_empty());
    }
    assert_eq!(reread.stage_trajectories, recipe.stage_trajectories());
}
