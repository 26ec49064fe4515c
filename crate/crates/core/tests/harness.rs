use proptest::prelude::*;

use hk_core::estimators::oracles::{analytic_oracle, OracleKind, OracleQuery};
use hk_core::harness::config::{
    BlowUpPolicy, DensityName, EstimatorConfig, InitialState, SamplingConfig, TimeConfig,
};
use hk_core::harness::output::{read_results, write_results, CSV_HEADER};
use hk_core::harness::run::derive_seed;
use hk_core::harness::scenarios::scenario_cases;
use hk_core::harness::{
    emit_results, parse_results, run_resolved, ExperimentConfig, OutputFormat, ResultRow,
    ResultsTable, Scenario,
};
use hk_core::{HkError, Observable, PhaseSpacePoint, Potential};

fn config(dim: usize, observables: &[&str], samples: usize, t_final: f64) -> ExperimentConfig {
    ExperimentConfig {
        dim,
        epsilon: 1.0,
        potential: Potential::Harmonic,
        psi0: InitialState {
            q0: vec![1.0; dim],
            p0: vec![0.5; dim],
            gamma: None,
        },
        observables: observables.iter().map(|s| s.to_string()).collect(),
        sampling: SamplingConfig {
            density: DensityName::SqrtHusimi,
            observable: None,
            sampler: None,
            hmc: Default::default(),
        },
        estimator: EstimatorConfig::Crude,
        samples,
        time: TimeConfig {
            t_final,
            step: 0.01,
            save_stride: 50,
        },
        repeats: 2,
        seed: 5,
        intrinsic: false,
        blow_up: BlowUpPolicy::Abort,
        output: None,
        allow_large: false,
    }
}

fn config_key(e: HkError) -> String {
    match e {
        HkError::Config { key, .. } => key,
        other => panic!("expected a config error, got {other}"),
    }
}

fn all_same(a: &ResultsTable, b: &ResultsTable) -> bool {
    a.rows.len() == b.rows.len() && a.rows.iter().zip(&b.rows).all(|(x, y)| x.same_numbers(y))
}

#[test]
fn runs_are_deterministic_and_independent_of_worker_count() {
    let mut cfg = config(2, &["Id", "q1", "H"], 3000, 1.0);
    cfg.intrinsic = true;
    let rc = cfg.resolve().unwrap();
    let one = run_resolved(&rc, 1).unwrap().table;
    let again = run_resolved(&rc, 1).unwrap().table;
    let four = run_resolved(&rc, 4).unwrap().table;
    assert_eq!(one.rows.len(), 2 * 3 * 3);
    assert!(all_same(&one, &again));
    assert!(all_same(&one, &four));

    cfg.seed = 6;
    let other = run_resolved(&cfg.resolve().unwrap(), 2).unwrap().table;
    assert!(!all_same(&one, &other));
}

#[test]
fn observables_share_trajectories() {
    let both = run_resolved(&config(2, &["Id", "p1"], 2048, 1.0).resolve().unwrap(), 2).unwrap();
    let single = run_resolved(&config(2, &["p1"], 2048, 1.0).resolve().unwrap(), 2).unwrap();
    let from_both: Vec<&ResultRow> = both.table.rows_for("p1").collect();
    assert_eq!(from_both.len(), single.table.rows.len());
    assert!(from_both.iter().zip(&single.table.rows).all(|(a, b)| a.same_numbers(b)));
}

#[test]
fn repeats_use_distinct_seed_streams() {
    let seeds: std::collections::HashSet<u64> = (0..100)
        .flat_map(|r| (0..3).map(move |s| derive_seed(9, r, s)))
        .collect();
    assert_eq!(seeds.len(), 300);
}

#[test]
fn harmonic_run_matches_exact_expectations_and_companion_variance() {
    let d = 2;
    let mut cfg = config(d, &["Id", "q1", "p2", "V", "H"], 1 << 16, 1.5);
    cfg.repeats = 1;
    let out = run_resolved(&cfg.resolve().unwrap(), 4).unwrap();
    let z0 = PhaseSpacePoint::new(vec![1.0; d], vec![0.5; d]).unwrap();
    for row in &out.table.rows {
        let obs = Observable::parse(&row.observable, Potential::Harmonic).unwrap();
        let query = |kind| {
            analytic_oracle(&OracleQuery {
                observable: obs,
                t: row.t,
                epsilon: 1.0,
                z0: &z0,
                potential: Potential::Harmonic,
                kind,
            })
            .unwrap()
        };
        let exact = query(OracleKind::Expectation);
        let dev = ((row.estimate_re - exact).powi(2) + row.estimate_im.powi(2)).sqrt();
        assert!(dev < 4.5 * row.std_err, "{} t={}: {} vs {exact}", row.observable, row.t, row.estimate_re);
        let v = query(OracleKind::SqrtHusimiVariance);
        let rel = row.variance_est.unwrap() / v - 1.0;
        assert!(rel.abs() < 0.1, "{} t={}: companion {:?} vs {v}", row.observable, row.t, row.variance_est);
        assert!(row.intrinsic_err.is_none() && row.acceptance.is_none());
    }
}

#[test]
fn husimi_runs_leave_the_variance_cell_empty() {
    let mut cfg = config(1, &["Id"], 256, 0.0);
    cfg.sampling.density = DensityName::Husimi;
    let out = run_resolved(&cfg.resolve().unwrap(), 1).unwrap();
    assert!(out.table.rows.iter().all(|r| r.variance_est.is_none()));
    let mut buf = Vec::new();
    write_results(&out.table, &mut buf, OutputFormat::Csv).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let first = text.lines().nth(1).unwrap();
    let cells: Vec<&str> = first.split(',').collect();
    assert_eq!(cells.len(), 10);
    assert_eq!(&cells[6..9], &["", "", ""]);
}

#[test]
fn hmc_runs_report_acceptance() {
    let mut cfg = config(1, &["p1^2"], 2000, 0.5);
    cfg.sampling.density = DensityName::Optimal;
    cfg.sampling.observable = Some("p1^2".into());
    cfg.sampling.hmc.burn_in = 200;
    cfg.estimator = EstimatorConfig::Wis {
        numerator: DensityName::Husimi,
    };
    cfg.repeats = 1;
    let rc = cfg.resolve().unwrap();
    let out = run_resolved(&rc, 2).unwrap();
    let a = out.table.rows[0].acceptance.unwrap();
    assert!((0.0..=1.0).contains(&a));
    assert!(out.table.rows.iter().all(|r| r.acceptance == Some(a)));
}

#[test]
fn abort_policy_reports_blow_up_and_drop_policy_continues() {
    let mut cfg = config(2, &["Id"], 256, 9.0);
    cfg.potential = Potential::HenonHeiles { sigma: 1.0 };
    cfg.psi0.q0 = vec![3.0; 2];
    cfg.psi0.p0 = vec![0.0; 2];
    cfg.time.step = 0.3;
    cfg.time.save_stride = 1;
    cfg.repeats = 1;
    match run_resolved(&cfg.resolve().unwrap(), 1) {
        Err(HkError::BlowUp { count, samples }) => {
            assert!(count > 0 && !samples.is_empty() && samples.iter().all(|&i| i < 256));
        }
        other => panic!("expected a blow-up, got {other:?}"),
    }
    cfg.blow_up = BlowUpPolicy::Drop;
    let out = run_resolved(&cfg.resolve().unwrap(), 2).unwrap();
    let dropped = out.diagnostics[0].dropped;
    assert!(dropped > 0 && dropped < 256, "dropped {dropped}");
    assert!(out.table.rows.iter().all(|r| r.estimate_re.is_finite()));
}

#[test]
fn config_round_trips_through_json() {
    let mut cfg = config(3, &["Id", "T"], 100, 2.0);
    cfg.sampling.density = DensityName::Optimal;
    cfg.sampling.observable = Some("q2^2".into());
    cfg.estimator = EstimatorConfig::Wis {
        numerator: DensityName::Husimi,
    };
    cfg.psi0.gamma = Some(vec![1.0; 3]);
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
    assert!(back.resolve().is_ok());
}

#[test]
fn config_errors_name_the_offending_key() {
    let json = config(2, &["Id"], 100, 1.0).to_json();
    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v.as_object_mut().unwrap().remove("samples");
    assert_eq!(config_key(ExperimentConfig::from_json(&v.to_string()).unwrap_err()), "samples");
    v["samples"] = 10.into();
    v["bogus"] = 1.into();
    assert_eq!(config_key(ExperimentConfig::from_json(&v.to_string()).unwrap_err()), "bogus");

    let resolve_key = |f: &dyn Fn(&mut ExperimentConfig)| {
        let mut cfg = config(2, &["Id"], 100, 1.0);
        f(&mut cfg);
        config_key(cfg.resolve().unwrap_err())
    };
    assert_eq!(resolve_key(&|c| c.psi0.q0.push(0.0)), "psi0.q0");
    assert_eq!(resolve_key(&|c| c.psi0.gamma = Some(vec![1.0, -1.0])), "psi0.gamma");
    assert_eq!(resolve_key(&|c| c.observables = vec!["q7".into()]), "observables[0]");
    assert_eq!(resolve_key(&|c| c.observables.clear()), "observables");
    assert_eq!(resolve_key(&|c| c.samples = 1), "samples");
    assert_eq!(resolve_key(&|c| c.samples = 1 << 24), "samples");
    assert_eq!(resolve_key(&|c| c.dim = 40), "dim");
    assert_eq!(resolve_key(&|c| c.repeats = 0), "repeats");
    assert_eq!(resolve_key(&|c| c.time.step = 0.3), "time");
    assert_eq!(resolve_key(&|c| c.epsilon = 0.0), "dim/epsilon");
    assert_eq!(
        resolve_key(&|c| {
            c.sampling.density = DensityName::Optimal;
            c.sampling.observable = Some("q1".into());
        }),
        "estimator"
    );
    assert_eq!(
        resolve_key(&|c| c.sampling.sampler = Some(hk_core::harness::config::SamplerChoice::Hmc)),
        "sampling.sampler"
    );
    assert_eq!(
        resolve_key(&|c| c.potential = Potential::HenonHeiles { sigma: f64::NAN }),
        "potential"
    );
}

#[test]
fn scenarios_parse_and_resolve() {
    for name in ["init-scan", "harmonic-d5", "henon-heiles"] {
        let s: Scenario = name.parse().unwrap();
        assert_eq!(s.to_string(), name);
        let cases = scenario_cases(s);
        assert!(!cases.is_empty());
        for c in &cases {
            c.config.resolve().unwrap_or_else(|e| panic!("{name}/{}: {e}", c.label));
        }
    }
    assert_eq!(config_key("figure-9".parse::<Scenario>().unwrap_err()), "scenario");
}

#[test]
fn header_only_and_single_row_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let row = ResultRow {
        repeat: 0,
        observable: "q0".into(),
        t: 0.25,
        estimate_re: 1.5,
        estimate_im: -1e-300,
        std_err: 0.1,
        variance_est: None,
        intrinsic_err: Some(3.0),
        acceptance: None,
        wall_ms: 12.0,
    };
    for table in [ResultsTable::default(), ResultsTable { rows: vec![row] }] {
        for (format, name) in [(OutputFormat::Csv, "out.csv"), (OutputFormat::JsonLines, "out.jsonl")] {
            let path = dir.path().join(name);
            emit_results(&table, &path, format).unwrap();
            assert_eq!(parse_results(&path, format).unwrap(), table);
        }
    }
    let path = dir.path().join("out.csv");
    emit_results(&ResultsTable::default(), &path, OutputFormat::Csv).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().trim_end(), CSV_HEADER.join(","));
    assert!(read_results("a,b\n".as_bytes(), OutputFormat::Csv).is_err());
    assert!("xml".parse::<OutputFormat>().is_err());
}

fn opt_cell() -> impl Strategy<Value = Option<f64>> {
    prop::option::of(-1e6f64..1e6)
}

fn arb_row() -> impl Strategy<Value = ResultRow> {
    (
        0usize..50,
        "[A-Za-z][A-Za-z0-9^]{0,5}",
        (0.0f64..100.0, -1e3f64..1e3, -1e3f64..1e3, 0.0f64..1e3),
        (opt_cell(), opt_cell(), opt_cell()),
        0.0f64..1e6,
    )
        .prop_map(|(repeat, observable, (t, re, im, se), (v, i, a), wall_ms)| ResultRow {
            repeat,
            observable,
            t,
            estimate_re: re,
            estimate_im: im,
            std_err: se,
            variance_est: v,
            intrinsic_err: i,
            acceptance: a,
            wall_ms,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tables_round_trip(rows in prop::collection::vec(arb_row(), 0..20)) {
        let table = ResultsTable { rows };
        for format in [OutputFormat::Csv, OutputFormat::JsonLines] {
            let mut buf = Vec::new();
            write_results(&table, &mut buf, format).unwrap();
            let back = read_results(buf.as_slice(), format).unwrap();
            prop_assert_eq!(&back, &table);
        }
    }
}
