//! Output plumbing: unique run directories, CSV tables, JSON summaries.
//!
//! Result tables and run logs are written deterministically — identical
//! config and seeds reproduce them byte for byte. Wall-clock measurements
//! never appear in those files; they go to separate `timings` files that
//! carry no determinism promise.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{config_err, CliResult};

/// Pick the directory a command writes into.
///
/// With `--out` the path is used as given; if it already exists,
/// `--overwrite` must be passed explicitly. Without `--out` a fresh
/// timestamped directory is created under `runs/`, so two invocations can
/// never trample each other.
pub fn resolve_out_dir(
    requested: Option<&Path>,
    overwrite: bool,
    subcommand: &str,
) -> CliResult<PathBuf> {
    if let Some(dir) = requested {
        if dir.exists() && !overwrite {
            return Err(config_err(format!(
                "output directory {} already exists; pass --overwrite to reuse it",
                dir.display()
            )));
        }
        std::fs::create_dir_all(dir).map_err(|e| {
            config_err(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        return Ok(dir.to_path_buf());
    }
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    for k in 0..10_000u32 {
        let name = if k == 0 {
            format!("{subcommand}-{stamp}")
        } else {
            format!("{subcommand}-{stamp}-{k}")
        };
        let dir = Path::new("runs").join(name);
        if !dir.exists() {
            std::fs::create_dir_all(&dir).map_err(|e| {
                config_err(format!(
                    "cannot create output directory {}: {e}",
                    dir.display()
                ))
            })?;
            return Ok(dir);
        }
    }
    Err(config_err(
        "could not find an unused timestamped output directory under runs/",
    ))
}

/// Write rows as an RFC-4180 CSV with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| config_err(format!("cannot serialize CSV row: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| config_err(format!("cannot finish CSV: {e}")))?;
    std::fs::write(path, bytes).map_err(ept_core::EptError::from)?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| config_err(format!("cannot serialize JSON: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(ept_core::EptError::from)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(ept_core::EptError::from)?;
    Ok(())
}

/// Sample mean and sample standard deviation (n − 1 denominator; 0 for a
/// single observation).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if sorted.is_empty() {
        return f64::NAN;
    }
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_out_dir_requires_overwrite_when_present() {
        let dir = std::env::temp_dir().join(format!("ept-out-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let got = resolve_out_dir(Some(&dir), false, "train").unwrap();
        assert_eq!(got, dir);
        let err = resolve_out_dir(Some(&dir), false, "train").unwrap_err();
        assert!(err.to_string().contains("--overwrite"), "got: {err}");
        assert!(resolve_out_dir(Some(&dir), true, "train").is_ok());
    }

    #[test]
    fn csv_quotes_fields_that_need_it() {
        #[derive(Serialize)]
        struct Row {
            name: String,
            value: f64,
        }
        let dir = std::env::temp_dir().join(format!("ept-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        write_csv(
            &path,
            &[Row {
                name: "a,b \"c\"".to_string(),
                value: 0.5,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "name,value\n\"a,b \"\"c\"\"\",0.5\n");
    }

    #[test]
    fn mean_std_and_median_match_hand_computation() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean_std(&[7.0]).1, 0.0);
    }
}
