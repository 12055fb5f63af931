use mxconv::train::{curve_csv, sweep_csv, sweep_random_removal, train, ToyDataset, ToyNetwork, ToySpec, TrainConfig};
use mxconv::MaskScheme;

use crate::error::{usage, CliError};
use crate::TrainArgs;

/// Parses `a..b` (inclusive) or a comma list.
fn parse_removals(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || usage(format!("--sweep-m '{s}': expected a..b or a comma list"));
    let values: Vec<usize> = match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            (a..=b).collect()
        }
        None => s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?,
    };
    if let Some(m) = values.iter().find(|m| **m > 8) {
        return Err(usage(format!("--sweep-m {m} out of range: a 3x3 slice allows 0..8")));
    }
    Ok(values)
}

pub fn run(a: TrainArgs) -> Result<(), CliError> {
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(usage(format!("--lr {} must be positive", a.lr)));
    }
    if a.batch == 0 {
        return Err(usage("--batch must be at least 1"));
    }
    let train_set = ToyDataset::generate(16, 12, 0.4, 1)?;
    let test_set = ToyDataset::generate(8, 12, 0.4, 2)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch,
        seed: a.seed,
    };
    let text = match &a.sweep_m {
        Some(spec) => {
            let removals = parse_removals(spec)?;
            if a.sweep_seeds == 0 {
                return Err(usage("--sweep-seeds must be at least 1"));
            }
            let seeds: Vec<u64> = (0..a.sweep_seeds).map(|i| a.seed.wrapping_add(i)).collect();
            let spec = ToySpec::two_conv(MaskScheme::Full, !a.float);
            sweep_csv(&sweep_random_removal(&spec, &train_set, &test_set, &removals, &seeds, &cfg)?)
        }
        None => {
            let spec = ToySpec::two_conv(MaskScheme::Deterministic, !a.float);
            let mut net = ToyNetwork::build(&spec, a.seed)?;
            curve_csv(&train(&mut net, &train_set, &test_set, &cfg)?)
        }
    };
    super::emit(a.out.as_deref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removal_lists() {
        assert_eq!(parse_removals("0..8").unwrap().len(), 9);
        assert_eq!(parse_removals("1, 3,5").unwrap(), vec![1, 3, 5]);
        assert!(parse_removals("3..1").is_err());
        assert!(parse_removals("0..9").is_err());
        assert!(parse_removals("x").is_err());
    }
}
