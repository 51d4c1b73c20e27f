use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use agentcrowd::study::{run_study, RunOptions, Stage, StageStatus, StudyConfig, StudyError, StudyState};

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo")
}

fn demo_config(out: &Path, edit: impl Fn(String) -> String) -> StudyConfig {
    let text = fs::read_to_string(demo_dir().join("study.toml")).unwrap();
    let mut cfg = StudyConfig::from_toml(&edit(text), &demo_dir()).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg.validate().unwrap();
    cfg
}

fn stages(list: &[Stage]) -> RunOptions {
    RunOptions {
        stages: Some(list.to_vec()),
        resume: false,
    }
}

#[test]
fn zero_quota_fails_experiencing_with_empty_team() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_config(dir.path(), |t| t.replace("\"quota.toml\"", "\"quota_zero.toml\""));
    let err = run_study(&cfg, &RunOptions::default()).unwrap_err();
    assert!(
        matches!(
            err,
            StudyError::Stage {
                stage: Stage::Experiencing,
                ..
            }
        ),
        "{err}"
    );
    assert!(err.to_string().contains("empty team"));
    assert_eq!(err.exit_code(), 3);
    let state = StudyState::load(dir.path()).unwrap().unwrap();
    assert_eq!(state.status(Stage::Screening), StageStatus::Done);
    assert_eq!(state.status(Stage::Experiencing), StageStatus::Failed);
    assert_eq!(fs::read_to_string(dir.path().join("screening/team.jsonl")).unwrap(), "");
}

#[test]
fn stage_without_its_input_is_not_ready() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_config(dir.path(), |t| t);
    let err = run_study(&cfg, &stages(&[Stage::Feedback])).unwrap_err();
    assert!(matches!(
        err,
        StudyError::NotReady {
            stage: Stage::Feedback,
            needs: Stage::Experiencing
        }
    ));
}

#[test]
fn separate_and_pipelined_screening_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = demo_config(a.path(), |t| t);
    run_study(&cfg_a, &stages(&[Stage::Onboarding, Stage::Screening])).unwrap();
    let cfg_b = demo_config(b.path(), |t| t);
    run_study(&cfg_b, &stages(&[Stage::Onboarding])).unwrap();
    run_study(&cfg_b, &stages(&[Stage::Screening])).unwrap();
    // Without early stop the whole sample is surveyed, but the team is the same.
    let team = |d: &Path| fs::read_to_string(d.join("screening/team.jsonl")).unwrap();
    assert_eq!(team(a.path()), team(b.path()));
    assert_eq!(team(a.path()).lines().count(), 240);
}

#[test]
fn resume_skips_done_stages_and_reuses_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = demo_config(out, |t| t);
    run_study(&cfg, &RunOptions::default()).unwrap();
    let manifest = fs::read(out.join("manifest.json")).unwrap();

    let resumed = RunOptions {
        stages: None,
        resume: true,
    };
    run_study(&cfg, &resumed).unwrap();
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), manifest);

    // Simulate an interrupted experiencing stage.
    let transcripts = out.join("experiencing/transcripts");
    let mut names: Vec<_> = fs::read_dir(&transcripts).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let original = fs::read(&names[0]).unwrap();
    fs::remove_file(&names[0]).unwrap();
    fs::write(&names[1], "{\"torn\":").unwrap();
    let mut state = StudyState::load(out).unwrap().unwrap();
    state.stages.get_mut(&Stage::Experiencing).unwrap().status = StageStatus::Failed;
    state.save(out).unwrap();

    let after = run_study(&cfg, &resumed).unwrap();
    assert!(Stage::ALL.iter().all(|s| after.status(*s) == StageStatus::Done));
    assert_eq!(fs::read(&names[0]).unwrap(), original);
    // Only the two affected players were replayed.
    let replayed = after.stages[&Stage::Experiencing].usage.requests;
    let full = serde_json::from_slice::<StudyState>(&manifest).unwrap().stages[&Stage::Experiencing]
        .usage
        .requests;
    assert!(replayed > 0 && replayed * 100 < full, "{replayed} of {full}");
}

#[test]
fn changed_config_refuses_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_config(dir.path(), |t| t);
    run_study(&cfg, &stages(&[Stage::Onboarding])).unwrap();
    let mut other = demo_config(dir.path(), |t| t);
    other.override_seed(7);
    let err = run_study(
        &other,
        &RunOptions {
            stages: None,
            resume: true,
        },
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_agentcrowd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = demo_dir().join("study.toml");
    let config = config.to_str().unwrap();

    assert_eq!(cli(&["run", "/nonexistent/study.toml"]).status.code(), Some(2));
    assert_eq!(
        cli(&["run", config, "--backend", "nosuch", "--out", out]).status.code(),
        Some(2)
    );
    assert_eq!(cli(&["feedback", config, "--out", out]).status.code(), Some(3));

    let ok = cli(&[
        "run",
        config,
        "--stages",
        "onboard,screen",
        "--seed",
        "42",
        "--out",
        out,
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let report = cli(&["report", out]);
    assert_eq!(report.status.code(), Some(0));
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("screening") && text.contains("Accepted team"), "{text}");
}
