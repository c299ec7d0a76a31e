//! Plain-text and binary dumps shared by the CLI and tests.
//!
//! Floats are written with 17 significant digits so that every value
//! round-trips exactly.

use std::io::{self, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;

use crate::filament::EnergyReport;
use crate::point_vortex::VortexTrajectory;
use crate::reduced::EnergySample;
use crate::spectral::{ComplexField, Grid1D};
use crate::traveling_wave::{SweepRow, WaveProfile};

pub const RAW_MAGIC: &[u8; 4] = b"VFS1";
pub const RAW_HEADER_LEN: usize = 16;

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_row<W: Write>(out: &mut W, cells: impl IntoIterator<Item = f64>) -> io::Result<()> {
    let line: Vec<String> = cells.into_iter().map(fmt17).collect();
    writeln!(out, "{}", line.join(","))
}

/// `sigma,re_0,im_0,…` with one row per grid node.
pub fn write_fields_csv<W: Write>(out: &mut W, fields: &[ComplexField]) -> io::Result<()> {
    let Some(first) = fields.first() else {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no fields to write"));
    };
    let grid = first.grid();
    if fields.iter().any(|f| !f.same_grid(first)) {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "fields live on different grids"));
    }
    let mut header = vec!["sigma".to_string()];
    for j in 0..fields.len() {
        header.push(format!("re_{j}"));
        header.push(format!("im_{j}"));
    }
    writeln!(out, "{}", header.join(","))?;
    for (n, &s) in grid.nodes().iter().enumerate() {
        let cells = std::iter::once(s).chain(fields.iter().flat_map(|f| {
            let z = f.values()[n];
            [z.re, z.im]
        }));
        write_row(out, cells)?;
    }
    Ok(())
}

/// Raw little-endian dump: `VFS1`, `u32 M`, `u32 N`, 4 reserved zero bytes,
/// then `N·M` complex samples as `(re, im)` float64 pairs, field by field.
pub fn write_fields_raw<W: Write>(out: &mut W, fields: &[ComplexField]) -> io::Result<()> {
    let m = fields.first().map_or(0, |f| f.len());
    if fields.iter().any(|f| f.len() != m) {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "field lengths differ"));
    }
    let as_u32 = |x: usize| {
        u32::try_from(x).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "size exceeds u32"))
    };
    out.write_all(RAW_MAGIC)?;
    out.write_all(&as_u32(m)?.to_le_bytes())?;
    out.write_all(&as_u32(fields.len())?.to_le_bytes())?;
    out.write_all(&[0u8; 4])?;
    for f in fields {
        for z in f.values() {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a raw dump back as `N` sample vectors.
pub fn read_fields_raw<R: Read>(input: &mut R) -> io::Result<Vec<Vec<Complex64>>> {
    let mut header = [0u8; RAW_HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[..4] != RAW_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().expect("4 bytes")) as usize;
    let (m, n) = (word(4), word(8));
    let mut buf = [0u8; 8];
    let mut next = |r: &mut R| -> io::Result<f64> {
        r.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    };
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = Vec::with_capacity(m);
        for _ in 0..m {
            let re = next(input)?;
            let im = next(input)?;
            v.push(Complex64::new(re, im));
        }
        fields.push(v);
    }
    Ok(fields)
}

/// Reads a field CSV written by [`write_fields_csv`] onto `grid`.
pub fn read_fields_csv(
    text: &str,
    grid: &Arc<Grid1D>,
    background: Complex64,
) -> io::Result<Vec<ComplexField>> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols = header.split(',').count();
    if cols < 3 || cols % 2 == 0 {
        return Err(bad(format!("header has {cols} columns")));
    }
    let n = (cols - 1) / 2;
    let mut values = vec![Vec::with_capacity(grid.len()); n];
    for (row, line) in lines.enumerate() {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("row {row}: {e}")))?;
        if cells.len() != cols {
            return Err(bad(format!("row {row} has {} columns", cells.len())));
        }
        for j in 0..n {
            values[j].push(Complex64::new(cells[1 + 2 * j], cells[2 + 2 * j]));
        }
    }
    values
        .into_iter()
        .map(|v| {
            ComplexField::new(Arc::clone(grid), v, background)
                .map_err(|e| bad(e.to_string()))
        })
        .collect()
}

pub const ENERGY_BM_HEADER: &str = "t,E,E_GP,sup_dev,min_mod";

pub fn write_bm_energies<W: Write>(out: &mut W, samples: &[EnergySample]) -> io::Result<()> {
    writeln!(out, "{ENERGY_BM_HEADER}")?;
    for s in samples {
        write_row(out, [s.time, s.energy, s.energy_gp, s.sup_dev, s.min_mod])?;
    }
    Ok(())
}

pub const ENERGY_FILAMENT_HEADER: &str =
    "t,H,A,T,I,E,kinetic,ratio_sq,sup_ratio_dev,min_sep,max_pair_norm,v_norm,w_norm";

/// Filament energy reports; `v_norm`/`w_norm` are empty unless `N = 4`.
pub fn write_filament_energies<W: Write>(out: &mut W, reports: &[EnergyReport]) -> io::Result<()> {
    writeln!(out, "{ENERGY_FILAMENT_HEADER}")?;
    for r in reports {
        let head: Vec<String> = [
            r.time,
            r.h,
            r.a,
            r.t_quant,
            r.i,
            r.e,
            r.kinetic,
            r.ratio_sq,
            r.sup_ratio_dev,
            r.min_sep,
            r.max_pair_norm(),
        ]
        .into_iter()
        .map(fmt17)
        .collect();
        let tail = match r.vw_norms {
            Some((v, w)) => format!("{},{}", fmt17(v), fmt17(w)),
            None => ",".to_string(),
        };
        writeln!(out, "{},{}", head.join(","), tail)?;
    }
    Ok(())
}

/// `t,re_X0,im_X0,…,center_re,center_im,ang_mom,log_sum,quad_sum`
pub fn write_trajectory<W: Write>(out: &mut W, traj: &VortexTrajectory) -> io::Result<()> {
    let n = traj.states.first().map_or(0, |c| c.len());
    let mut header = vec!["t".to_string()];
    for j in 0..n {
        header.push(format!("re_X{j}"));
        header.push(format!("im_X{j}"));
    }
    header.extend(["center_re", "center_im", "ang_mom", "log_sum", "quad_sum"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for ((&t, cfg), inv) in traj.times.iter().zip(&traj.states).zip(&traj.invariant_series) {
        let cells = std::iter::once(t)
            .chain(cfg.positions.iter().flat_map(|z| [z.re, z.im]))
            .chain([
                inv.center_of_inertia.re,
                inv.center_of_inertia.im,
                inv.angular_momentum,
                inv.log_sum,
                inv.quad_sum,
            ]);
        write_row(out, cells)?;
    }
    Ok(())
}

pub const WAVE_HEADER: &str = "sigma,eta,theta,re_v,im_v";

pub fn write_wave_profile<W: Write>(out: &mut W, wave: &WaveProfile) -> io::Result<()> {
    writeln!(out, "{WAVE_HEADER}")?;
    for (n, &s) in wave.grid().nodes().iter().enumerate() {
        let z = wave.v.values()[n];
        write_row(out, [s, wave.eta[n], wave.theta[n], z.re, z.im])?;
    }
    Ok(())
}

pub const SWEEP_HEADER: &str = "c2,sigma1,energy,phase_jump,residual";

pub fn write_sweep<W: Write>(out: &mut W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        write_row(out, [r.c2, r.sigma1, r.energy, r.phase_jump, r.residual])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;

    fn sample_fields() -> Vec<ComplexField> {
        let g = make_grid(4.0, 8).unwrap();
        (0..2)
            .map(|j| {
                ComplexField::from_fn(&g, Complex64::new(0.0, 0.0), |s| {
                    Complex64::new(s * 0.1 + j as f64, -1.0 / 3.0 * s)
                })
            })
            .collect()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let fields = sample_fields();
        let mut buf = Vec::new();
        write_fields_csv(&mut buf, &fields).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sigma,re_0,im_0,re_1,im_1\n"));
        assert_eq!(text.lines().count(), 9);
        let back = read_fields_csv(&text, fields[0].grid(), Complex64::new(0.0, 0.0)).unwrap();
        for (a, b) in fields.iter().zip(&back) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn raw_round_trip_and_header() {
        let fields = sample_fields();
        let mut buf = Vec::new();
        write_fields_raw(&mut buf, &fields).unwrap();
        assert_eq!(&buf[..4], b"VFS1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(buf.len(), RAW_HEADER_LEN + 2 * 8 * 16);
        let back = read_fields_raw(&mut buf.as_slice()).unwrap();
        assert_eq!(back[1], fields[1].values());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_fields_raw(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn seventeen_digits() {
        let s = fmt17(0.1);
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(s.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }
}
