use std::path::{Path, PathBuf};

use smaspl::checkpoint::{self, checkpoint_path};
use smaspl::log::{read_log, EpisodeLog, LOG_FILE, TIMINGS_FILE};
use smaspl::profiles::{load_profiles, save_profiles};
use smaspl::report::{read_constraints, write_report, CONSTRAINTS_FILE, REPORT_FILES};
use smaspl::run;
use smaspl::scenario::{load_scenario, ProfileSection, Scenario, ScenarioFile};
use smaspl_core::exec::Sequential;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn short(name: &str, episodes: usize) -> Scenario {
    let mut sc = load_scenario(&scenarios().join(name)).unwrap();
    sc.file.training.episodes = episodes;
    Scenario::build(sc.file, &scenarios()).unwrap()
}

#[test]
fn shipped_scenarios_survive_a_toml_round_trip() {
    for name in ["two-mg.toml", "tiny-oracle.toml", "five-mg-line.toml"] {
        let path = scenarios().join(name);
        let file = ScenarioFile::parse(&std::fs::read_to_string(&path).unwrap(), &path).unwrap();
        let again = ScenarioFile::parse(&file.to_toml(), &path).unwrap();
        assert_eq!(file, again, "{name}");
    }
}

#[test]
fn unknown_scenario_keys_are_rejected() {
    let path = scenarios().join("two-mg.toml");
    let text = std::fs::read_to_string(&path).unwrap().replacen("seed = ", "sede = 1\nseed = ", 1);
    assert!(ScenarioFile::parse(&text, &path).is_err());
}

#[test]
fn csv_profiles_reproduce_the_generated_series() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short("two-mg.toml", 1);
    let csv = dir.path().join("profiles.csv");
    save_profiles(&sc.profiles, &csv).unwrap();
    assert_eq!(load_profiles(&csv).unwrap(), sc.profiles);

    let mut file = sc.file.clone();
    let forecast = match &file.profiles {
        ProfileSection::Synthetic { forecast, .. } => forecast.clone(),
        ProfileSection::Csv { forecast, .. } => forecast.clone(),
    };
    file.profiles = ProfileSection::Csv { path: "profiles.csv".into(), forecast };
    let from_csv = Scenario::build(file, dir.path()).unwrap();
    assert_eq!(from_csv.profiles, sc.profiles);
    assert_eq!(from_csv.forecast, sc.forecast);
}

#[test]
fn run_outputs_reload() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short("two-mg.toml", 3);
    let out = run::train(&sc, Some(dir.path()), &Sequential).unwrap();

    let logs: Vec<EpisodeLog> = read_log(&dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(logs, out.logs);
    let timings = std::fs::read_to_string(dir.path().join(TIMINGS_FILE)).unwrap();
    assert_eq!(timings.lines().count(), 3);

    for (a, p) in out.trainer.policies().iter().enumerate() {
        let back = checkpoint::load(&checkpoint_path(dir.path(), a)).unwrap();
        assert_eq!(&back, p);
        assert_eq!(checkpoint::to_text(&back), checkpoint::to_text(p));
    }

    let constraints = read_constraints(&dir.path().join(CONSTRAINTS_FILE)).unwrap();
    assert_eq!(constraints.len(), out.trainer.env().table.len());
    let rebuilt = tempfile::tempdir().unwrap();
    write_report(&logs, &constraints, rebuilt.path()).unwrap();
    for name in REPORT_FILES {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(rebuilt.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn truncated_checkpoint_is_an_error() {
    let sc = short("two-mg.toml", 1);
    let trainer = run::build_trainer(&sc, None).unwrap();
    let text = checkpoint::to_text(&trainer.policies()[0]);
    let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
    assert!(checkpoint::from_text(&cut).is_err());
    assert!(checkpoint::from_text(&text.replacen("v1", "v9", 1)).is_err());
}
