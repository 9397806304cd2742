//! Binary snapshot format for phase-space states: a fixed header
//! (magic, dims, grid, time, frame) followed by raw interleaved re/im f64
//! little-endian samples in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::state::{Frame, PhaseSpaceState};

const MAGIC: &[u8; 8] = b"VLSNAP01";

pub fn write_snapshot(path: &Path, state: &PhaseSpaceState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(state.grid.d as u32).to_le_bytes())?;
    w.write_all(&(state.grid.n_x as u32).to_le_bytes())?;
    w.write_all(&(state.grid.n_v as u32).to_le_bytes())?;
    let frame: u32 = match state.frame {
        Frame::Lab => 0,
        Frame::FreeTransport => 1,
    };
    w.write_all(&frame.to_le_bytes())?;
    w.write_all(&state.grid.v_max.to_le_bytes())?;
    w.write_all(&state.time.to_le_bytes())?;
    for z in state.values.iter() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<PhaseSpaceState> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: not a snapshot file (bad magic)",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let d = read_u32(&mut r)? as usize;
    let n_x = read_u32(&mut r)? as usize;
    let n_v = read_u32(&mut r)? as usize;
    let frame = match read_u32(&mut r)? {
        0 => Frame::Lab,
        1 => Frame::FreeTransport,
        other => return Err(Error::Format(format!("unknown frame tag {other}"))),
    };
    let mut f64buf = [0u8; 8];
    let mut read_f64 = |r: &mut BufReader<File>| -> Result<f64> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let v_max = read_f64(&mut r)?;
    let time = read_f64(&mut r)?;
    let grid = TorusGrid::new(d, n_x, n_v, v_max)?;
    let n = grid.n_cells();
    let mut values = Vec::with_capacity(n);
    let mut pair = [0u8; 16];
    for _ in 0..n {
        r.read_exact(&mut pair)?;
        let re = f64::from_le_bytes(pair[..8].try_into().unwrap());
        let im = f64::from_le_bytes(pair[8..].try_into().unwrap());
        values.push(Complex64::new(re, im));
    }
    let values = ArrayD::from_shape_vec(IxDyn(&grid.shape()), values)
        .map_err(|e| Error::Format(format!("snapshot shape mismatch: {e}")))?;
    Ok(PhaseSpaceState { grid, values, time, frame })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn snapshot_round_trip() {
        let grid = TorusGrid::new(1, 8, 16, 5.0).unwrap();
        let mut st = PhaseSpaceState::zero(grid);
        st.time = 3.25;
        st.frame = Frame::FreeTransport;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for v in st.values.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let dir = std::env::temp_dir().join("vlasolve_snap_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.snap");
        write_snapshot(&path, &st).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.grid, st.grid);
        assert_eq!(back.time, st.time);
        assert_eq!(back.frame, st.frame);
        assert_eq!(back.values, st.values);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rejects_garbage() {
        let dir = std::env::temp_dir().join("vlasolve_snap_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.snap");
        std::fs::write(&path, b"not a snapshot at all").unwrap();
        assert!(read_snapshot(&path).is_err());
        std::fs::remove_file(&path).ok();
    }
}
