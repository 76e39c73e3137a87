//! Binary flow files.
//!
//! Layout, little-endian: magic `CONVFLOW`, `u16` version, `u32` D, `u32` H,
//! `f32` s_max, `u64` parameter count, that many `f32` parameters in
//! declaration order (block 0 scale, block 0 translate, block 1 scale,
//! block 1 translate; each net layer by layer, weights then bias), then a
//! `u8` calibration flag followed by `f64` median and `f64` IQR.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Calibration, FlowModel};
use crate::binio::OffsetReader;
use crate::error::{ConvError, Result};

pub const FLOW_MAGIC: &[u8; 8] = b"CONVFLOW";
pub const FLOW_VERSION: u16 = 1;

pub fn write_flow<W: Write>(flow: &FlowModel, mut out: W) -> Result<()> {
    out.write_all(FLOW_MAGIC)?;
    out.write_all(&FLOW_VERSION.to_le_bytes())?;
    out.write_all(&(flow.dim() as u32).to_le_bytes())?;
    out.write_all(&(flow.hidden() as u32).to_le_bytes())?;
    out.write_all(&(flow.s_max() as f32).to_le_bytes())?;
    out.write_all(&(flow.param_count() as u64).to_le_bytes())?;
    for &p in flow.params() {
        out.write_all(&(p as f32).to_le_bytes())?;
    }
    match flow.calibration() {
        Some(c) => {
            out.write_all(&[1])?;
            out.write_all(&c.median.to_le_bytes())?;
            out.write_all(&c.iqr.to_le_bytes())?;
        }
        None => {
            out.write_all(&[0])?;
            out.write_all(&[0u8; 16])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_flow<R: Read>(input: R) -> Result<FlowModel> {
    let mut r = OffsetReader::new(input);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic, "magic")?;
    if &magic != FLOW_MAGIC {
        return Err(ConvError::format(0, "not a flow file (bad magic)"));
    }
    let version = r.u16("version")?;
    if version != FLOW_VERSION {
        return Err(ConvError::format(8, format!("unsupported flow file version {version}")));
    }
    let dim = r.u32("dimension")? as usize;
    let hidden = r.u32("hidden width")? as usize;
    let s_max = r.f32("s_max")? as f64;
    let mut flow = FlowModel::zeroed(dim, hidden, s_max)
        .map_err(|e| ConvError::format(10, format!("invalid flow header: {e}")))?;
    let count_at = r.offset;
    let count = r.u64("parameter count")?;
    if count != flow.param_count() as u64 {
        return Err(ConvError::format(
            count_at,
            format!(
                "parameter count {count} does not match D={dim}, H={hidden} (expected {})",
                flow.param_count()
            ),
        ));
    }
    for i in 0..flow.param_count() {
        let at = r.offset;
        let v = r.f32("parameters")?;
        if !v.is_finite() {
            return Err(ConvError::format(at, "non-finite parameter"));
        }
        flow.params_mut()[i] = v as f64;
    }
    let flag_at = r.offset;
    let flag = r.u8("calibration flag")?;
    let median = r.f64("calibration median")?;
    let iqr = r.f64("calibration IQR")?;
    let calibration = match flag {
        0 => None,
        1 => Some(Calibration { median, iqr }),
        other => return Err(ConvError::format(flag_at, format!("bad calibration flag {other}"))),
    };
    flow.set_calibration(calibration);
    Ok(flow)
}

pub fn save_flow(flow: &FlowModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| ConvError::from(e).in_file(path))?;
    write_flow(flow, BufWriter::new(file)).map_err(|e| e.in_file(path))
}

pub fn load_flow(path: &Path) -> Result<FlowModel> {
    let file = File::open(path).map_err(|e| ConvError::from(e).in_file(path))?;
    read_flow(BufReader::new(file)).map_err(|e| e.in_file(path))
}
