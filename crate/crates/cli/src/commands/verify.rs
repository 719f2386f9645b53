//! `mstk verify`: run the property suite, print one line per check, and
//! exit nonzero on any failure.

use std::path::{Path, PathBuf};

use mstk_core::verify::{run, VerifyOptions};

use crate::error::{CliError, Result};
use crate::manifest::{prepare_out_dir, write_manifest};

pub fn execute(
    seed: u64,
    filter: Option<String>,
    out: Option<&Path>,
    inject_fault: bool,
) -> Result<()> {
    let opts = VerifyOptions {
        seed,
        filter: filter.clone(),
        inject_stroke_fault: inject_fault,
    };
    let reports = run(&opts)?;
    if reports.is_empty() {
        return Err(CliError::Config(format!(
            "no checks match filter '{}'",
            filter.unwrap_or_default()
        )));
    }
    let mut failures = 0usize;
    for report in &reports {
        let status = if report.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} {name:<44} statistic={stat:>12.4e} tolerance={tol:>10.2e}",
            name = report.name,
            stat = report.statistic,
            tol = report.tolerance,
        );
        if !report.passed {
            failures += 1;
        }
    }
    println!(
        "{} checks, {} passed, {} failed",
        reports.len(),
        reports.len() - failures,
        failures
    );

    if let Some(out_dir) = out {
        prepare_out_dir(out_dir)?;
        let mut csv = String::from("check,statistic,tolerance,pass\n");
        for report in &reports {
            csv.push_str(&format!(
                "{},{:e},{:e},{}\n",
                report.name, report.statistic, report.tolerance, report.passed
            ));
        }
        let csv_path = out_dir.join("checks.csv");
        std::fs::write(&csv_path, csv).map_err(CliError::io(&csv_path))?;
        write_manifest(
            out_dir,
            seed,
            &[("filter".to_string(), filter.unwrap_or_default())],
            &[PathBuf::from("checks.csv")],
        )?;
    }

    if failures > 0 {
        return Err(CliError::CheckFailure(format!(
            "{failures} verification checks failed"
        )));
    }
    Ok(())
}
