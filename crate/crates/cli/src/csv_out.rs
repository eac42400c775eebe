//! CSV emission for completed runs: `timeseries.csv` with a fixed column
//! order and `events.csv` with the discrete record. Numbers are written
//! with nine significant digits and a plain decimal point, so re-running
//! the same seed reproduces the files byte for byte.

use std::io::{BufWriter, Write};
use std::path::Path;

use dcsim_core::engine::SimLog;

/// Nine significant digits, locale-free.
fn fmt(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    format!("{:.8e}", x)
}

pub fn emit_csv(log: &SimLog, out_dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_timeseries(log, &out_dir.join("timeseries.csv"))?;
    write_events(log, &out_dir.join("events.csv"))?;
    Ok(())
}

fn write_timeseries(log: &SimLog, path: &Path) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);

    let mut header: Vec<String> = vec!["t_s".into()];
    for name in &log.bus_names {
        header.push(format!("v_pu_{name}"));
        header.push(format!("f_hz_{name}"));
        header.push(format!("rocof_hz_s_{name}"));
    }
    for name in &log.dc_names {
        header.push(format!("p_grid_mw_{name}"));
        header.push(format!("q_grid_mvar_{name}"));
        header.push(format!("mode_{name}"));
        header.push(format!("e_mwh_{name}"));
        header.push(format!("p_it_mw_{name}"));
        header.push(format!("p_cooling_mw_{name}"));
    }
    writeln!(w, "{}", header.join(","))?;

    for r in 0..log.rows() {
        let mut row: Vec<String> = vec![fmt(log.t_s[r])];
        for b in 0..log.bus_names.len() {
            row.push(fmt(log.v_pu[b][r]));
            row.push(fmt(log.f_hz[b][r]));
            row.push(fmt(log.rocof_hz_s[b][r]));
        }
        for d in 0..log.dc_names.len() {
            row.push(fmt(log.p_grid_mw[d][r]));
            row.push(fmt(log.q_grid_mvar[d][r]));
            row.push(log.mode[d][r].as_str().into());
            row.push(fmt(log.e_mwh[d][r]));
            row.push(fmt(log.p_it_mw[d][r]));
            row.push(fmt(log.p_cooling_mw[d][r]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

fn write_events(log: &SimLog, path: &Path) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t_s,kind,dc_id,detail")?;
    for e in &log.events {
        let dc = match e.dc {
            Some(i) => match e.segment {
                Some(s) => format!("{}[{s}]", log.dc_names[i]),
                None => log.dc_names[i].clone(),
            },
            None => String::new(),
        };
        // keep the CSV well-formed: details never contain quotes
        let detail = e.detail.replace(',', ";");
        writeln!(w, "{},{},{},{}", fmt(e.t_s), e.kind.label(), dc, detail)?;
    }
    w.flush()
}
