//! Experiment orchestration: scenario configs, seeded Monte Carlo trials,
//! figure-table experiments, and result persistence.
//!
//! Determinism contract: every experiment output is a pure function of
//! (config, master seed). Per-trial seeds come from a counter-mode derivation
//! of the master seed and are never shared between trials; parallel trials
//! are reduced in trial order.

mod config;
mod experiments;
mod report;
mod trial;

pub use config::{DetectorKind, ListaTrainKnobs, ScenarioConfig, VqConfig};
pub use experiments::{
    experiment_convergence, experiment_hardening, experiment_mse_vs_m, experiment_mse_vs_q,
    experiment_optq_vs_l, experiment_sparsity, experiment_vq, train_lista_cached,
    ConvergenceOutcome, ConvergenceRow, HardeningRow, HardeningTable, MseVsMRow, MseVsMTable,
    OptqRow, OptqTable, SparsityRow, SparsityTable, SweepTable, VqRow, VqTable,
};
pub use report::{write_csv, write_json, write_trial_records, RunSummary};
pub use trial::{
    prepare_context, run_cell, run_cell_with, run_trial, run_trial_with, trial_seed, CellStats,
    TrialContext, TrialRecord,
};
