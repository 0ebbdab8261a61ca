use latent_treat::data::derive_stream;
use latent_treat::design::Residualization;
use latent_treat::simulate::scenario::{prepare_world, run_scenario, world_diagnostics, ScenarioConfig};
use latent_treat::simulate::{generate_synthetic_corpus, SyntheticWorld, WorldParams};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

#[test]
fn full_protocol_corpus_size() {
    let world = SyntheticWorld::new(WorldParams::default(), &derive_stream(0, &[0])).unwrap();
    let recs = generate_synthetic_corpus(&world, 300, &derive_stream(0, &[1])).unwrap();
    assert_eq!(recs.len(), 7500);
}

#[test]
fn no_spillover_means_no_confounding_bias() {
    let cfg = ScenarioConfig {
        world: WorldParams { spillover: 0.0, ..Default::default() },
        n_base: 150,
        n_specs: 1,
        seeds: (0..10).collect(),
        ic_min: 0.0,
        strategies: vec![Residualization::None, Residualization::DimByDim],
        diagnostics: false,
        ..Default::default()
    };
    let r = run_scenario(&cfg).unwrap();
    assert!(r.worlds.iter().all(|w| w.kept));
    let n = r.worlds[0].n_design;
    assert!((900..=1200).contains(&n), "n = {n}");
    let raw: Vec<f64> = r.rows.iter().filter(|x| x.strategy == "raw").map(|x| x.abs_bias).collect();
    let res: Vec<f64> = r.rows.iter().filter(|x| x.strategy == "dim_by_dim").map(|x| x.abs_bias).collect();
    assert_eq!(raw.len(), 10);
    let (mr, md) = (median(raw), median(res));
    assert!(mr < 0.5 && md < 0.5, "median |bias| raw {mr}, residualized {md}");
}

#[test]
fn spillover_is_visible_in_embeddings() {
    let cfg = ScenarioConfig { n_base: 150, ..Default::default() };
    let w = prepare_world(&cfg, 1).unwrap();
    let d = world_diagnostics(&cfg, &w, Residualization::DimByDim).unwrap();
    assert!(d.acc_raw >= 0.9, "acc_raw {}", d.acc_raw);
    assert!(d.acc_resid < d.acc_raw);
}
