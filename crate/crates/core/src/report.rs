//! Plot-ready CSV reports. Every number goes through [`sig6`] so reports
//! are byte-stable for equal inputs.

use std::io::Write;

use crate::area::{AreaCoefficients, HardwareConfig};
use crate::error::Result;
use crate::explorer::{resource_share, BaselineComparison, DesignPoint};

/// `%g`-style formatting with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn hw_fields(hw: &HardwareConfig) -> [String; 3] {
    [hw.n_sm.to_string(), hw.n_v.to_string(), sig6(hw.m_sm_kb)]
}

pub const POINT_HEADER: [&str; 6] = ["area_mm2", "gflops", "n_SM", "n_V", "M_SM", "pareto_flag"];

/// Feasible design points with their frontier membership.
pub fn write_points<W: Write>(out: W, points: &[DesignPoint], frontier: &[DesignPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POINT_HEADER)?;
    for p in points.iter().filter(|p| p.feasible) {
        let on_frontier = frontier.iter().any(|f| f.hw == p.hw);
        let [n_sm, n_v, m_sm] = hw_fields(&p.hw);
        w.write_record([sig6(p.area_mm2), sig6(p.gflops), n_sm, n_v, m_sm, u8::from(on_frontier).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_frontier<W: Write>(out: W, frontier: &[DesignPoint]) -> Result<()> {
    write_points(out, frontier, frontier)
}

pub fn write_resources<W: Write>(out: W, points: &[DesignPoint], coeffs: &AreaCoefficients) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["area_mm2", "gflops", "n_SM", "n_V", "M_SM", "memory_share", "vector_share", "overhead_share"])?;
    for p in points {
        let s = resource_share(&p.hw, coeffs);
        let [n_sm, n_v, m_sm] = hw_fields(&p.hw);
        w.write_record([
            sig6(p.area_mm2),
            sig6(p.gflops),
            n_sm,
            n_v,
            m_sm,
            sig6(s.memory_share),
            sig6(s.vector_share),
            sig6(s.overhead_share),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sensitivity<W: Write>(out: W, rows: &[(String, Option<DesignPoint>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kernel", "area_mm2", "gflops", "n_SM", "n_V", "M_SM", "weighted_time_s"])?;
    for (kernel, best) in rows {
        match best {
            Some(p) => {
                let [n_sm, n_v, m_sm] = hw_fields(&p.hw);
                w.write_record([
                    kernel.clone(),
                    sig6(p.area_mm2),
                    sig6(p.gflops),
                    n_sm,
                    n_v,
                    m_sm,
                    sig6(p.weighted_time_s),
                ])?;
            }
            None => w.write_record([kernel.as_str(), "", "", "", "", "", ""])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_baselines<W: Write>(out: W, rows: &[BaselineComparison]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "name",
        "area_mm2",
        "gflops",
        "best_area_mm2",
        "best_gflops",
        "best_n_SM",
        "best_n_V",
        "best_M_SM",
        "improvement_pct",
    ])?;
    for r in rows {
        let (ba, bg, [bn, bv, bm]) = match &r.best {
            Some(p) => (sig6(p.area_mm2), sig6(p.gflops), hw_fields(&p.hw)),
            None => (String::new(), String::new(), [String::new(), String::new(), String::new()]),
        };
        w.write_record([
            r.name.clone(),
            sig6(r.baseline.area_mm2),
            sig6(r.baseline.gflops),
            ba,
            bg,
            bn,
            bv,
            bm,
            r.improvement_pct.map(sig6).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
