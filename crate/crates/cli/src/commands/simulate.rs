//! `mstk simulate`: run the affine surrogate chain from the config and
//! write the per-step energy trace with bound margins.

use std::path::{Path, PathBuf};

use mstk_core::stroke::RoughnessSchedule;
use mstk_core::surrogate::{
    build_surrogate, check_bound, simulate, weights_from_schedule, SurrogateConfig, SurrogateDims,
};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{prepare_out_dir, write_manifest};

pub fn execute(config: &RunConfig, out_dir: &Path) -> Result<()> {
    prepare_out_dir(out_dir)?;
    let dims = SurrogateDims::new(
        config.sim_channels,
        config.sim_height,
        config.sim_width,
        config.stroke_k,
    )?;
    let rough = RoughnessSchedule::new(config.sim_steps, config.f_rough, config.w_max)?;
    let spec = build_surrogate(SurrogateConfig {
        dims,
        steps: config.sim_steps,
        rho: config.sim_table("rho", &config.rho)?,
        kappa: config.sim_table("kappa", &config.kappa)?,
        sigma: config.sim_table("sigma", &config.sigma)?,
        bias_energy: config.sim_table("bias_energy", &config.bias_energy)?,
        weights: weights_from_schedule(&rough),
        coarse_gain: config.coarse_gain,
        detail_kind: config.sim_block,
        samples: config.sim_samples,
        seed: config.seed,
    })?;
    let norm_deviation = spec.verify_norms()?;
    let trace = simulate(&spec)?;
    let bound_report = check_bound(&trace, &spec)?;

    // one row per chain index t = n..0; bound and margin refer to the
    // step t -> t-1 and are blank on the terminal row
    let mut csv = String::from("step,E,C2,N,bound,margin\n");
    for row in &trace.rows {
        let margin = trace.margins.iter().find(|m| m.t == row.t);
        match margin {
            Some(m) => csv.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e}\n",
                row.t, row.detail_energy, row.coarse_energy, row.noise_detail_dim, m.bound, m.margin
            )),
            None => csv.push_str(&format!(
                "{},{:e},{:e},{:e},,\n",
                row.t, row.detail_energy, row.coarse_energy, row.noise_detail_dim
            )),
        }
    }
    let trace_path = out_dir.join("trace.csv");
    std::fs::write(&trace_path, csv).map_err(CliError::io(&trace_path))?;
    write_manifest(
        out_dir,
        config.seed,
        &config.to_lines(),
        &[PathBuf::from("trace.csv")],
    )?;
    println!(
        "simulated {} trajectories over {} steps; block-norm deviation {:.2e}; bound {}",
        config.sim_samples,
        config.sim_steps,
        norm_deviation,
        if bound_report.all_passed {
            "holds at every step"
        } else {
            "VIOLATED (see trace.csv margins)"
        }
    );
    if !bound_report.all_passed {
        return Err(CliError::CheckFailure(
            "detail-energy bound violated beyond Monte Carlo slack".into(),
        ));
    }
    Ok(())
}
