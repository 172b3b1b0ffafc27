use augpolicy::rl::AgentKind;
use augpolicy_cli::config::SplitName;
use augpolicy_cli::harness::{ablation_table, AblationRow};
use augpolicy_cli::plot::{line_chart, Series};
use augpolicy_cli::{CliError, RunConfig};

#[test]
fn empty_file_is_the_default_and_defaults_round_trip() {
    let d = RunConfig::from_toml("").unwrap();
    assert_eq!(d, RunConfig::default());
    assert_eq!(RunConfig::from_toml(&d.to_toml()).unwrap(), d);
    d.validate().unwrap();
    assert_eq!(d.agent.kind, AgentKind::Ppo);
    assert_eq!(d.agent.split, SplitName::Val);
    assert_eq!(d.tta.k, 3);
    assert_eq!(d.bank().unwrap().len(), 14);
    assert_eq!(d.manifest(9).counts.len(), 2);
}

#[test]
fn nested_overrides() {
    let c = RunConfig::from_toml(
        r#"
seeds = [4, 5]
[agent]
kind = "dqn"
bank = ["identity", "rotate", "solarize"]
[agent.dqn]
gamma = 0.9
[tta]
k = 2
[ablate]
k_max = 3
"#,
    )
    .unwrap();
    c.validate().unwrap();
    assert_eq!(c.seeds, [4, 5]);
    assert_eq!(c.agent.kind, AgentKind::Dqn);
    assert_eq!(c.agent.dqn.gamma, 0.9);
    assert_eq!(c.agent_config().dqn.gamma, 0.9);
    assert_eq!(c.bank().unwrap().names(), ["identity", "rotate", "solarize"]);
    assert_eq!(c.agent_options(5).seed, 5);
}

#[test]
fn invalid_configs_are_config_errors() {
    for text in [
        "seeds = []",
        "bogus = 1",
        "[tta]\nk = 15",
        "[agent]\nbank = [\"identity\", \"warp\"]",
        "[agent]\nhorizon = 0",
        "[ablate]\nk_min = 3\nk_max = 2",
        "[agent]\nbank = [\"identity\", \"rotate\"]",
        "[data]\ntrain_domain = 7",
        "[data]\nwidth = 4",
        "[agent.ppo]\nclip = -1.0",
    ] {
        let r = RunConfig::from_toml(text).and_then(|c| c.validate());
        match r {
            Err(e @ CliError::Config(_)) => assert_eq!(e.exit_code(), 2),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn ablation_table_marks_best_per_domain() {
    let rows: Vec<AblationRow> = [("A", 1, 0.9), ("A", 2, 0.95), ("B", 1, 0.7), ("B", 2, 0.6)]
        .into_iter()
        .map(|(d, k, auc)| AblationRow {
            eval_domain: d.into(),
            k,
            auc,
            pauc: 0.5,
            eer: 0.1,
        })
        .collect();
    let t = ablation_table(&rows);
    let marked: Vec<&str> = t.lines().filter(|l| l.ends_with('*')).collect();
    assert_eq!(marked.len(), 2);
    assert!(marked[0].starts_with("A") && marked[0].contains("0.9500"));
    assert!(marked[1].starts_with("B") && marked[1].contains("0.7000"));
}

#[test]
fn chart_is_wellformed_svg() {
    let s = line_chart(
        "a < b & c",
        "x",
        "y",
        &[
            Series { name: "flat".into(), points: vec![(0.0, 1.0), (1.0, 1.0)] },
            Series { name: "gap".into(), points: vec![(0.0, f64::NAN), (2.0, 3.0)] },
        ],
        None,
    );
    assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    assert!(s.contains("a &lt; b &amp; c"));
    assert_eq!(s.matches("<polyline").count(), 2);
    assert!(!s.contains("NaN"));
}
