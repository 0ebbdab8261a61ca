//! Synthetic experiments: semi-synthetic outcome DGPs, a structural
//! steering world, finite oracle worlds, and the end-to-end scenario runner.

pub mod dgp;
pub mod oracle;
pub mod scenario;
pub mod world;

pub use dgp::{sample_dgp_specs, synthesize_outcomes, DgpSpec, Form, GFunction, SyntheticOutcomes};
pub use oracle::{oracle_check_props, oracle_check_theorem1, random_oracle_world, OracleWorld, PropsReport, Theorem1Report};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioResults};
pub use world::{generate_synthetic_corpus, SyntheticWorld, WorldParams};
