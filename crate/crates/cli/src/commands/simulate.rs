use latent_treat::simulate::scenario::{run_scenario, ScenarioResults};
use serde::Serialize;

use super::display_strategy;
use crate::error::CliResult;
use crate::output::{csv_text, num, Outputs};
use crate::svg;

pub use latent_treat::simulate::scenario::ScenarioConfig;

#[derive(Serialize)]
struct Summary<'a> {
    strategies: &'a [latent_treat::simulate::scenario::StrategySummary],
    worlds: &'a [latent_treat::simulate::scenario::WorldSummary],
}

pub fn results_csv(r: &ScenarioResults) -> CliResult<Vec<u8>> {
    let rows = r.rows.iter().map(|x| {
        vec![
            x.seed.to_string(),
            x.spec_id.to_string(),
            x.functions.clone(),
            x.strategy.clone(),
            num(x.ate_hat),
            num(x.ate_bias),
            num(x.abs_bias),
            num(x.cate_rmse),
            num(x.lambda),
            x.n_clipped.to_string(),
        ]
    });
    csv_text(
        &["seed", "spec_id", "functions", "strategy", "ate_hat", "ate_bias", "abs_bias", "cate_rmse", "lambda", "n_clipped"],
        rows,
    )
}

/// Overlaid |bias| and RMSE distributions per strategy.
pub fn bias_rmse_chart(rows: &[(String, f64, f64)]) -> String {
    let mut labels: Vec<&str> = Vec::new();
    for (s, _, _) in rows {
        if !labels.contains(&s.as_str()) {
            labels.push(s);
        }
    }
    let pick = |f: &dyn Fn(&(String, f64, f64)) -> f64| -> Vec<(String, Vec<f64>)> {
        labels
            .iter()
            .map(|l| {
                (
                    display_strategy(l).to_string(),
                    rows.iter().filter(|r| r.0 == *l).map(f).collect(),
                )
            })
            .collect()
    };
    svg::render(&[
        svg::histogram_overlay("absolute ATE bias", "|bias|", &pick(&|r| r.1), 20),
        svg::histogram_overlay("CATE RMSE", "RMSE", &pick(&|r| r.2), 20),
    ])
}

pub fn run(cfg: &ScenarioConfig, out: &mut Outputs) -> CliResult<()> {
    let r = run_scenario(cfg)?;
    out.add_json("summary.json", &Summary { strategies: &r.summary, worlds: &r.worlds })?;
    out.add("results.csv", results_csv(&r)?);
    let rows: Vec<(String, f64, f64)> = r.rows.iter().map(|x| (x.strategy.clone(), x.abs_bias, x.cate_rmse)).collect();
    out.add("bias_rmse.svg", bias_rmse_chart(&rows));
    Ok(())
}
