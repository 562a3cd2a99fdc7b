use hicov::dataio::{analyze, load_price_csv, read_report, write_report, AnalyzeOptions, LoadOptions};
use hicov::estimators::{all_pairs, analyze_pairs, realized_cov, StatMode};
use hicov::harness::Method;
use hicov::model_sim::{simulate_paths, HestonParams, SimScenario};
use hicov::mtest::{pairwise_partition, sector_partition, stepdown, RomanoWolfProvider};
use hicov::rng::{domain, substream};

fn scenario(seed: u64) -> SimScenario {
    SimScenario::draw(195, 9, HestonParams::default(), 4, 0.5, 5, seed).unwrap()
}

#[test]
fn csv_pipeline_matches_memory_bit_for_bit() {
    let sc = scenario(1);
    let grid = simulate_paths(&sc, &mut substream(1, domain::PATHS, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    grid.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let panel = load_price_csv(&path, Some("F"), &LoadOptions::default()).unwrap();
    let from_file = panel.increments().unwrap();
    let in_memory = grid.increments().unwrap();
    assert_eq!(from_file, in_memory);
    assert_eq!(realized_cov(&from_file), realized_cov(&in_memory));
}

#[test]
fn report_round_trip_and_mask_view() {
    let sc = scenario(2);
    let grid = simulate_paths(&sc, &mut substream(2, domain::PATHS, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    grid.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let panel = load_price_csv(&path, Some("F"), &LoadOptions::default()).unwrap();
    let sectors = sector_partition(&["a", "a", "b", "b", "c", "c", "d", "d"]).unwrap();
    let opts = AnalyzeOptions {
        b: 99,
        methods: vec![Method::RW, Method::Holm],
        seed: 4,
        ..AnalyzeOptions::default()
    };
    let report = analyze(&panel, Some(&sectors), &opts).unwrap();
    assert_eq!(report.tables.len(), 2);
    assert_eq!(report.tables[0].groups.len(), sectors.len());

    let du = 8;
    for i in 0..du {
        assert!(!report.masked(i, i));
        for j in 0..du {
            assert_eq!(report.masked(i, j), report.masked(j, i));
        }
    }

    // the mask is the pairwise RW stepdown, recomputed here
    let inc = panel.increments().unwrap();
    let analysis = analyze_pairs(&inc, &all_pairs(du), StatMode::Factor, None).unwrap();
    let part = pairwise_partition(du);
    let mut rng = rand::SeedableRng::seed_from_u64(opts.seed);
    let draws: hicov::bootstrap::BootstrapDraws = {
        let rng: &mut rand_chacha::ChaCha8Rng = &mut rng;
        hicov::bootstrap::bootstrap_group_maxima(&inc, &analysis, &part, opts.b, rng).unwrap()
    };
    let stats: Vec<f64> = analysis.stats.iter().map(|s| s.t.abs()).collect();
    let result = stepdown(&stats, &RomanoWolfProvider::new(&draws), opts.alpha).unwrap();
    for (l, g) in part.groups().iter().enumerate() {
        let (i, j) = g[0];
        assert_eq!(report.masked(i, j), !result.rejected[l]);
    }

    let out = dir.path().join("report");
    write_report(&report, &out).unwrap();
    assert_eq!(read_report(&out).unwrap(), report);
    let first = std::fs::read(out.join("groups.json")).unwrap();
    write_report(&report, &out).unwrap();
    assert_eq!(std::fs::read(out.join("groups.json")).unwrap(), first);
}

#[test]
fn raw_mode_without_factor() {
    let sc = scenario(3);
    let grid = simulate_paths(&sc, &mut substream(3, domain::PATHS, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    grid.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let opts = LoadOptions {
        ignore_cols: vec!["F".into()],
        ..LoadOptions::default()
    };
    let panel = load_price_csv(&path, None, &opts).unwrap();
    assert_eq!(panel.mode(), StatMode::Raw);
    let report = analyze(
        &panel,
        None,
        &AnalyzeOptions {
            b: 99,
            ..AnalyzeOptions::default()
        },
    )
    .unwrap();
    // every asset loads on the common factor, so raw covariations are far from zero
    assert!(report.meta.fraction_significant > 0.9, "{}", report.meta.fraction_significant);
}

/// Mask errors on a known structure: any masked-out off-block pair is a
/// family-wise error.
#[test]
fn mask_controls_family_wise_error() {
    let runs = 200;
    let sc = SimScenario::draw(195, 7, HestonParams::default(), 3, 0.5, 5, 9).unwrap();
    let mut errors = 0;
    for r in 0..runs {
        let grid = simulate_paths(&sc, &mut substream(9, domain::REPLICATION, r)).unwrap();
        let truth = grid.truth.clone().unwrap();
        let panel = hicov::dataio::PricePanel {
            asset_ids: grid.asset_ids[..6].to_vec(),
            factor_id: Some("F".into()),
            prices: grid.prices.clone(),
            bars: grid.n + 1,
            sessions: None,
        };
        let report = analyze(
            &panel,
            None,
            &AnalyzeOptions {
                b: 99,
                seed: r,
                ..AnalyzeOptions::default()
            },
        )
        .unwrap();
        let wrong = all_pairs(6).iter().any(|&(i, j)| truth.is_null(i, j) && !report.masked(i, j));
        errors += usize::from(wrong);
    }
    let fwer = errors as f64 / runs as f64;
    let bound = 0.05 + 2.0 * (0.05f64 * 0.95 / runs as f64).sqrt();
    assert!(fwer <= bound, "FWER {fwer} above {bound}");
}
