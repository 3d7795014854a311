mod common;

use apl::dataio::{
    generate_dataset, read_dataset, write_dataset, DatasetFile, DatasetHeader, RunConfig, Tier, FORMAT_VERSION,
};
use apl::envs::EnvKind;
use apl::error::{Error, ParseErrorKind};
use apl::oorb::Transition;
use common::tiers::{dataset_stats, strictly_ordered};
use proptest::prelude::*;

fn write_read(d: &DatasetFile) -> DatasetFile {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    write_dataset(&path, d).unwrap();
    read_dataset(&path).unwrap()
}

#[test]
fn generated_dataset_round_trips() {
    let d = generate_dataset(EnvKind::PointMass, Tier::Expert, 3, 8).unwrap();
    assert_eq!(write_read(&d), d);
    let d = generate_dataset(EnvKind::Pendulum, Tier::MediumExpert, 40, 8).unwrap();
    assert_eq!(write_read(&d), d);
}

#[test]
fn short_file_reports_truncation_line() {
    let d = generate_dataset(EnvKind::Pendulum, Tier::Random, 5, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    write_dataset(&path, &d).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, kept).unwrap();
    match read_dataset(&path) {
        Err(Error::Parse { line, kind, path: p }) => {
            assert_eq!(line, 6);
            assert_eq!(kind, ParseErrorKind::Truncated { declared: 5, found: 4 });
            assert_eq!(p, path);
        }
        other => panic!("{other:?}"),
    }
    let missing = dir.path().join("absent.jsonl");
    assert!(read_dataset(&missing).unwrap_err().to_string().contains("absent.jsonl"));
}

#[test]
fn random_tier_is_centred_in_the_box() {
    for env in [EnvKind::Pendulum, EnvKind::PointMass] {
        let spec = env.spec();
        let d = generate_dataset(env, Tier::Random, 10_000, 21).unwrap();
        for j in 0..spec.act_dim {
            let mean = d.records.iter().map(|t| t.action[j]).sum::<f64>() / d.records.len() as f64;
            let centre = 0.5 * (spec.action_low[j] + spec.action_high[j]);
            let half = 0.5 * (spec.action_high[j] - spec.action_low[j]);
            assert!((mean - centre).abs() < 0.1 * half, "{env} dim {j}: {mean}");
        }
    }
}

#[test]
fn tiers_are_ordered_by_return() {
    let stats: Vec<_> = [Tier::Random, Tier::Medium, Tier::Expert]
        .into_iter()
        .map(|t| dataset_stats(EnvKind::Pendulum, t, 100, 31))
        .collect();
    assert!(stats.iter().all(|s| s.episodes == 100));
    assert!(strictly_ordered(&stats, 2.0));
}

#[test]
fn medium_expert_holds_both_halves() {
    let d = generate_dataset(EnvKind::Pendulum, Tier::MediumExpert, 1000, 4).unwrap();
    assert_eq!(d.records.len(), 1000);
    assert_eq!(d.header.n_records, 1000);
    assert_eq!(d.header.provenance, ["medium", "expert"]);
    let medium = generate_dataset(EnvKind::Pendulum, Tier::Medium, 500, 4).unwrap();
    assert_ne!(d.records[..500], medium.records[..]);
}

#[test]
fn medium_replay_stops_at_the_cap() {
    let settings = apl::dataio::ReplaySettings {
        agent: apl::gcql::GcqlConfig {
            hidden: vec![8],
            ..Default::default()
        },
        batch_size: 16,
        chunk: 100,
        eval_episodes: 1,
        reference_episodes: 5,
        ..Default::default()
    };
    let d = apl::dataio::generate_dataset_with(EnvKind::Pendulum, Tier::MediumReplay, 300, 2, &settings).unwrap();
    assert!(d.records.len() <= 300 && d.records.len() >= 100);
    assert_eq!(d.records.len() % 100, 0);
    assert_eq!(d.header.behavior_tag, "medium-replay");
    // chronological: consecutive records within an episode chain states
    for (i, pair) in d.records.windows(2).enumerate() {
        assert_eq!(pair[0].next_state == pair[1].state, (i + 1) % 200 != 0);
    }
}

#[test]
fn config_file_loads_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(
        &path,
        "agent = gctd3bc\nenv = pointmass\npolicy_delay = 3\nvariant = wg\n",
    )
    .unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.gctd3bc.policy_delay, 3);
    assert_eq!(cfg.env, EnvKind::PointMass);
    cfg.validate().unwrap();
    std::fs::write(&path, "agent = gcql\ntau = 2\n").unwrap();
    assert!(RunConfig::load(&path).unwrap().validate().is_err());
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(5e-324),
        Just(f64::MAX),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_is_lossless(
        rows in prop::collection::vec((prop::collection::vec(finite(), 2), finite(), finite(), prop::collection::vec(finite(), 2), any::<bool>()), 1..6)
    ) {
        let records: Vec<Transition> = rows
            .into_iter()
            .map(|(s, a, r, s2, done)| Transition { state: s, action: vec![a], reward: r, next_state: s2, terminal: done })
            .collect();
        let d = DatasetFile {
            header: DatasetHeader {
                format_version: FORMAT_VERSION,
                env_name: "custom".into(),
                obs_dim: 2,
                act_dim: 1,
                n_records: records.len(),
                behavior_tag: "random".into(),
                generator_seed: 0,
                provenance: Vec::new(),
            },
            records,
        };
        let back = write_read(&d);
        for (x, y) in d.records.iter().zip(&back.records) {
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&x.state), bits(&y.state));
            prop_assert_eq!(bits(&x.action), bits(&y.action));
            prop_assert_eq!(x.reward.to_bits(), y.reward.to_bits());
            prop_assert_eq!(bits(&x.next_state), bits(&y.next_state));
            prop_assert_eq!(x.terminal, y.terminal);
        }
    }
}
