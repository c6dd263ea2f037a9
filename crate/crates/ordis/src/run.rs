//! Single training runs written to a run directory.
//!
//! ```text
//! <out>/config.toml     full configuration echo
//! <out>/metrics.csv     one line per epoch
//! <out>/checkpoint.txt  selected parameters
//! <out>/run.log         seeds, hashes, selected epoch, test metrics
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ordis_core::metrics::{metrics, MetricsReport};
use ordis_core::seqgen::{Dataset, Split};
use ordis_core::trainer::{evaluate_split, train, TrainResult};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const LOG_FILE: &str = "run.log";

pub struct RunSummary {
    pub result: TrainResult,
    pub test: MetricsReport,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn metrics_csv(result: &TrainResult) -> String {
    let mut s = String::from(
        "epoch,c_u,c_loc,d_u,d_loc,adv_u,adv_loc,seq,unlabeled,val_accuracy,val_f1,adjacent_distance,pseudo_labels\n",
    );
    for (e, r) in result.history.iter().enumerate() {
        let l = &r.losses;
        let _ = write!(s, "{e}");
        for t in [l.c_u, l.c_loc, l.d_u, l.d_loc, l.adv_u, l.adv_loc, l.seq, l.unlabeled] {
            let _ = write!(s, ",{:.6}", t.value);
        }
        let _ = writeln!(
            s,
            ",{},{},{:.6},{}",
            opt(r.validation.accuracy),
            opt(r.validation.f1),
            r.adjacent_distance,
            r.pseudo_labels
        );
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::io(path))
}

/// Trains with `config.train()` on `dataset` and writes the run directory.
pub fn train_run(config: &RunConfig, dataset: &Dataset, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out).map_err(Error::io(out))?;
    write(&out.join(CONFIG_FILE), &config.to_toml())?;
    let train_cfg = config.train()?;
    let result = train(dataset, &config.network(), &train_cfg)?;
    let test = metrics(&evaluate_split(&result.params, dataset, Split::Test)?);
    write(&out.join(METRICS_FILE), &metrics_csv(&result))?;
    checkpoint::save(&result.params, &out.join(CHECKPOINT_FILE))?;

    let mut log = String::new();
    let _ = writeln!(log, "method {}", train_cfg.method);
    let _ = writeln!(log, "seed {}", train_cfg.seed);
    let _ = writeln!(log, "data_seed {}", dataset.manifest.seed);
    let _ = writeln!(log, "config_hash {}", dataset.manifest.config_hash);
    let _ = writeln!(log, "records_hash {}", dataset.manifest.records_hash);
    let _ = writeln!(log, "epochs {}", result.history.len());
    match result.selected_epoch {
        Some(e) => _ = writeln!(log, "selected_epoch {e}"),
        None => _ = writeln!(log, "selected_epoch none"),
    }
    for (name, v) in MetricsReport::COLUMNS.iter().zip(test.values()) {
        let _ = writeln!(log, "test_{name} {}", opt(v));
    }
    write(&out.join(LOG_FILE), &log)?;
    Ok(RunSummary { result, test })
}
