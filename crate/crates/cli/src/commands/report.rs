use mxconv::hwsim::presets::{find_row, render_csv, render_markdown, table2_report, table2_rows, Table2Line};
use mxconv::hwsim::run_pipeline;
use mxconv::Model;

use super::model::{preset_config, random_input};
use super::simulate::model_layers;
use crate::error::{usage, CliError};
use crate::{Format, ReportArgs};

pub fn run(a: ReportArgs) -> Result<(), CliError> {
    if !a.table2 {
        return Err(usage("nothing to report; pass --table2"));
    }
    let rows = match a.rows.as_deref() {
        None => table2_rows(),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .map(|k| find_row(k).ok_or_else(|| usage(format!("unknown row '{k}'"))))
            .collect::<Result<_, _>>()?,
    };
    let lines = if a.simulate {
        rows.iter()
            .map(|row| {
                let model = Model::random(preset_config(row.key)?, 0, false)?;
                let layers = model_layers(&model, row.frequency_hz())?;
                let fmt = layers[0].0.fmt;
                let images: Vec<_> = (0..2).map(|s| random_input(&model.config, s).quantize(fmt)).collect();
                let run = run_pipeline(&layers, &images, None)?;
                Ok(Table2Line::from_report(row, &run.report))
            })
            .collect::<Result<Vec<_>, CliError>>()?
    } else {
        table2_report(&rows)
    };
    let text = match a.format {
        Format::Markdown | Format::Text => render_markdown(&lines),
        Format::Csv => render_csv(&lines),
        Format::Json => super::json(&lines)?,
    };
    super::emit(None, &text)
}
