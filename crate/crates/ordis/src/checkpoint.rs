//! Parameter checkpoints as plain text.
//!
//! ```text
//! # ordis-checkpoint v1
//! input_dim 32
//! encoder_widths 64
//! branch_widths 32
//! z_dim 16
//! uc_classes 2
//! loc_classes 3
//! tensor E 0 32,64
//! <32*64 values separated by spaces>
//! tensor E 1 64
//! ...
//! end
//! ```
//!
//! Tensors appear group by group (E, B_u, B_loc, C_u, C_loc, D_u, D_loc),
//! weight then bias for each layer. Values use the shortest representation
//! that parses back to the same `f64`. The closing `end` line guards against
//! truncation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ordis_core::net::{Group, NetworkConfig, ParamSet};
use ordis_core::Tensor;

use crate::error::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "# ordis-checkpoint v1";

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn to_text(params: &ParamSet) -> String {
    let c = params.config();
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_HEADER}");
    let _ = writeln!(s, "input_dim {}", c.input_dim);
    let _ = writeln!(s, "encoder_widths {}", join(&c.encoder_widths));
    let _ = writeln!(s, "branch_widths {}", join(&c.branch_widths));
    let _ = writeln!(s, "z_dim {}", c.z_dim);
    let _ = writeln!(s, "uc_classes {}", c.uc_classes);
    let _ = writeln!(s, "loc_classes {}", c.loc_classes);
    for g in Group::ALL {
        for (k, t) in params.group(g).iter().enumerate() {
            let _ = writeln!(s, "tensor {} {k} {}", g.name(), join(t.shape()));
            let values: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", values.join(" "));
        }
    }
    s.push_str("end\n");
    s
}

pub fn from_text(text: &str, path: &Path) -> Result<ParamSet> {
    let bad = |detail: String| Error::corrupt(path, detail);
    let mut lines = text.lines();
    match lines.next() {
        Some(CHECKPOINT_HEADER) => {}
        Some(h) if h.starts_with("# ordis-checkpoint") => {
            return Err(Error::Version { path: path.into(), found: h.into(), expected: CHECKPOINT_HEADER });
        }
        _ => return Err(bad("missing checkpoint header".into())),
    }
    let mut field = |name: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing `{name}`")))?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(format!("expected `{name}`, found `{line}`")))
    };
    let num = |s: String| s.parse::<usize>().map_err(|_| bad(format!("bad integer `{s}`")));
    let list = |s: String| -> Result<Vec<usize>> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|v| v.parse::<usize>().map_err(|_| bad(format!("bad integer `{v}`")))).collect()
    };
    let config = NetworkConfig {
        input_dim: num(field("input_dim")?)?,
        encoder_widths: list(field("encoder_widths")?)?,
        branch_widths: list(field("branch_widths")?)?,
        z_dim: num(field("z_dim")?)?,
        uc_classes: num(field("uc_classes")?)?,
        loc_classes: num(field("loc_classes")?)?,
    };
    config.validate().map_err(|e| bad(e.to_string()))?;

    let mut groups: [Vec<Tensor>; 7] = Default::default();
    let mut ended = false;
    while let Some(line) = lines.next() {
        if line == "end" {
            ended = true;
            break;
        }
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(bad(format!("expected a tensor line, found `{line}`")));
        }
        let group = Group::parse(parts[1]).map_err(|e| bad(e.to_string()))?;
        let slot = Group::ALL.iter().position(|&g| g == group).expect("listed");
        if parts[2].parse::<usize>().ok() != Some(groups[slot].len()) {
            return Err(bad(format!("tensor {} {} out of order", parts[1], parts[2])));
        }
        let shape = list(parts[3].to_string())?;
        let data_line = lines.next().ok_or_else(|| bad("missing tensor values".into()))?;
        let data: Vec<f64> = data_line
            .split(' ')
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| bad(format!("bad value in tensor {} {}", parts[1], parts[2])))?;
        groups[slot].push(Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?);
    }
    if !ended {
        return Err(bad("missing `end` line (truncated?)".into()));
    }
    ParamSet::from_groups(config, groups).map_err(|e| bad(e.to_string()))
}

pub fn save(params: &ParamSet, path: &Path) -> Result<()> {
    fs::write(path, to_text(params)).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<ParamSet> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    from_text(&text, path)
}
