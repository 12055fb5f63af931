use mxconv::{coverage_stats, KernelShape, KernelSize, MaskScheme, PruneMask};
use serde_json::json;

use crate::error::{usage, CliError};
use crate::{Format, MaskArgs};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn run(a: MaskArgs) -> Result<(), CliError> {
    let kernel = KernelSize::parse(&a.kernel).ok_or_else(|| usage(format!("unknown kernel '{}', use 3x3 or 1x1", a.kernel)))?;
    if a.kmax == 0 || a.lmax == 0 {
        return Err(usage("--kmax and --lmax must be at least 1"));
    }
    let shape = KernelShape::square(kernel.extent(), a.kmax, a.lmax);
    let mask = match a.random_m {
        Some(m) if m >= shape.slice_len() => {
            return Err(usage(format!(
                "--random-m {m} out of range: a {} slice has {} positions, so m must be below {}",
                a.kernel,
                shape.slice_len(),
                shape.slice_len()
            )))
        }
        Some(m) => PruneMask::random(shape, m, a.seed)?,
        None => PruneMask::deterministic(shape),
    };
    let stats = coverage_stats(&mask);
    let (kept, total) = (mask.kept_count(), shape.len());
    let g = gcd(kept, total).max(1);
    let fraction = format!("{}/{}", kept / g, total / g);
    let scheme = match mask.scheme() {
        MaskScheme::Deterministic => "deterministic".to_string(),
        MaskScheme::Random { removed, seed } => format!("random(m={removed}, seed={seed})"),
        MaskScheme::Full => "full".to_string(),
    };
    let text = match a.format {
        Format::Text | Format::Markdown => {
            let mut s = format!(
                "kernel {}, k_max {}, l_max {}, scheme {scheme}\n\
                 kept {kept} of {total} connections\n\
                 kept fraction {fraction}, removal {:.1}%\n\
                 positions used {} of {}\n",
                a.kernel,
                a.kmax,
                a.lmax,
                100.0 * mask.removal_fraction(),
                stats.positions_used,
                shape.slice_len()
            );
            s.push_str("histogram (rows λ, columns ι):\n");
            for row in stats.histogram.chunks(shape.width) {
                let cells: Vec<_> = row.iter().map(|c| format!("{c:>6}")).collect();
                s.push_str(&cells.join(""));
                s.push('\n');
            }
            s
        }
        Format::Csv => {
            let mut s = String::from("iota,lambda,count\n");
            for (pos, c) in stats.histogram.iter().enumerate() {
                s.push_str(&format!("{},{},{c}\n", pos % shape.width, pos / shape.width));
            }
            s
        }
        Format::Json => super::json(&json!({
            "kernel": a.kernel,
            "k_max": a.kmax,
            "l_max": a.lmax,
            "scheme": mask.scheme(),
            "kept": kept,
            "total": total,
            "kept_fraction": mask.kept_fraction(),
            "removal_fraction": mask.removal_fraction(),
            "coverage": stats,
        }))?,
    };
    super::emit(None, &text)
}
