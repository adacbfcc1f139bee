//! On-disk formats: a binary network container, a binary burst-dataset
//! container, and a small deterministic CSV writer. All multi-byte values are
//! little-endian; floats are IEEE-754 f64 bit patterns, so round trips are
//! bitwise exact and rewrites are byte-identical.

use crate::dynamics::{BurstDataset, ChannelStats, DeltaRepr, NormStats};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::Burst;
use crate::mlp::{DenseLayer, MlpParams};
use crate::net::{BlockVariant, OsgNet, Sharing};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const NET_MAGIC: &[u8; 8] = b"OSGNET1\0";
const DATA_MAGIC: &[u8; 8] = b"OSGDAT1\0";

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u8(w: &mut impl Write, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn check_magic(r: &mut impl Read, expect: &[u8; 8], what: &str) -> Result<()> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != expect {
        return Err(Error::Format(format!("not a {what} file (bad magic)")));
    }
    Ok(())
}

/// Guards against absurd counts from corrupt headers before allocating.
fn checked_len(v: u64, limit: u64, what: &str) -> Result<usize> {
    if v > limit {
        return Err(Error::Format(format!("{what} count {v} exceeds sanity limit {limit}")));
    }
    Ok(v as usize)
}

pub fn write_net_to(w: &mut impl Write, net: &OsgNet) -> Result<()> {
    w.write_all(NET_MAGIC)?;
    put_u32(w, net.state_dim() as u32)?;
    put_u32(w, net.num_blocks() as u32)?;
    put_u8(w, match net.variant() {
        BlockVariant::Standard => 0,
        BlockVariant::Multiscale => 1,
    })?;
    put_u8(w, match net.sharing() {
        Sharing::Recursive => 0,
        Sharing::Recurrent => 1,
    })?;
    put_u32(w, net.stored_blocks().len() as u32)?;
    for block in net.stored_blocks() {
        put_u32(w, block.layers.len() as u32)?;
        for layer in &block.layers {
            put_u32(w, layer.weight.rows() as u32)?;
            put_u32(w, layer.weight.cols() as u32)?;
        }
        for layer in &block.layers {
            for v in layer.weight.data() {
                put_f64(w, *v)?;
            }
            for v in &layer.bias {
                put_f64(w, *v)?;
            }
        }
    }
    Ok(())
}

pub fn read_net_from(r: &mut impl Read) -> Result<OsgNet> {
    check_magic(r, NET_MAGIC, "network")?;
    let state_dim = checked_len(get_u32(r)? as u64, 1 << 20, "state dimension")?;
    let num_blocks = checked_len(get_u32(r)? as u64, 1 << 16, "block")?;
    let variant = match get_u8(r)? {
        0 => BlockVariant::Standard,
        1 => BlockVariant::Multiscale,
        t => return Err(Error::Format(format!("unknown block-variant tag {t}"))),
    };
    let sharing = match get_u8(r)? {
        0 => Sharing::Recursive,
        1 => Sharing::Recurrent,
        t => return Err(Error::Format(format!("unknown sharing tag {t}"))),
    };
    let stored = checked_len(get_u32(r)? as u64, 1 << 16, "stored block")?;
    let mut blocks = Vec::with_capacity(stored);
    for _ in 0..stored {
        let layer_count = checked_len(get_u32(r)? as u64, 1 << 10, "layer")?;
        let mut dims = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let rows = checked_len(get_u32(r)? as u64, 1 << 20, "layer rows")?;
            let cols = checked_len(get_u32(r)? as u64, 1 << 20, "layer cols")?;
            dims.push((rows, cols));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for (rows, cols) in dims {
            let mut weight = Matrix::zeros(rows, cols);
            for v in weight.data_mut() {
                *v = get_f64(r)?;
            }
            let mut bias = vec![0.0; rows];
            for v in &mut bias {
                *v = get_f64(r)?;
            }
            layers.push(DenseLayer { weight, bias });
        }
        blocks.push(MlpParams { layers });
    }
    OsgNet::from_blocks(state_dim, blocks, num_blocks, variant, sharing)
}

pub fn write_net(path: impl AsRef<Path>, net: &OsgNet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_net_to(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn read_net(path: impl AsRef<Path>) -> Result<OsgNet> {
    read_net_from(&mut BufReader::new(File::open(path)?))
}

fn put_channel(w: &mut impl Write, c: &ChannelStats) -> Result<()> {
    put_f64(w, c.min)?;
    put_f64(w, c.max)?;
    put_u8(w, c.degenerate as u8)
}

fn get_channel(r: &mut impl Read) -> Result<ChannelStats> {
    let min = get_f64(r)?;
    let max = get_f64(r)?;
    let degenerate = match get_u8(r)? {
        0 => false,
        1 => true,
        t => return Err(Error::Format(format!("bad degenerate flag {t}"))),
    };
    Ok(ChannelStats { min, max, degenerate })
}

fn put_state(w: &mut impl Write, u: &[f64]) -> Result<()> {
    for v in u {
        put_f64(w, *v)?;
    }
    Ok(())
}

fn get_state(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut u = vec![0.0; n];
    for v in &mut u {
        *v = get_f64(r)?;
    }
    Ok(u)
}

pub fn write_dataset_to(w: &mut impl Write, ds: &BurstDataset) -> Result<()> {
    let n = ds.state_dim()?;
    if ds.domain_bounds.len() != n {
        return Err(Error::Shape("dataset bounds differ from state dimension".into()));
    }
    w.write_all(DATA_MAGIC)?;
    put_u32(w, n as u32)?;
    put_u64(w, ds.bursts.len() as u64)?;
    put_u8(w, ds.delta_repr.tag())?;
    put_u8(w, ds.normalized as u8)?;
    put_f64(w, ds.eta)?;
    put_u64(w, ds.seed)?;
    put_f64(w, ds.delta_range[0])?;
    put_f64(w, ds.delta_range[1])?;
    for b in &ds.domain_bounds {
        put_f64(w, b[0])?;
        put_f64(w, b[1])?;
    }
    match &ds.norm {
        None => put_u8(w, 0)?,
        Some(stats) => {
            if stats.state.len() != n {
                return Err(Error::Shape("normalization channels differ from state dimension".into()));
            }
            put_u8(w, 1)?;
            for c in &stats.state {
                put_channel(w, c)?;
            }
            put_channel(w, &stats.delta)?;
            put_u8(w, stats.repr.tag())?;
        }
    }
    let name = ds.system.as_bytes();
    put_u32(w, name.len() as u32)?;
    w.write_all(name)?;
    for b in &ds.bursts {
        if b.u0.len() != n || b.u1.len() != n || b.u2.len() != n {
            return Err(Error::Shape("burst state dimension differs from header".into()));
        }
        put_state(w, &b.u0)?;
        put_f64(w, b.delta1)?;
        put_state(w, &b.u1)?;
        put_f64(w, b.delta2)?;
        put_state(w, &b.u2)?;
    }
    Ok(())
}

pub fn read_dataset_from(r: &mut impl Read) -> Result<BurstDataset> {
    check_magic(r, DATA_MAGIC, "dataset")?;
    let n = checked_len(get_u32(r)? as u64, 1 << 20, "state dimension")?;
    let count = checked_len(get_u64(r)?, 1 << 32, "burst")?;
    let delta_repr = DeltaRepr::from_tag(get_u8(r)?)?;
    let normalized = match get_u8(r)? {
        0 => false,
        1 => true,
        t => return Err(Error::Format(format!("bad normalized flag {t}"))),
    };
    let eta = get_f64(r)?;
    let seed = get_u64(r)?;
    let delta_range = [get_f64(r)?, get_f64(r)?];
    let mut domain_bounds = Vec::with_capacity(n);
    for _ in 0..n {
        domain_bounds.push([get_f64(r)?, get_f64(r)?]);
    }
    let norm = match get_u8(r)? {
        0 => None,
        1 => {
            let mut state = Vec::with_capacity(n);
            for _ in 0..n {
                state.push(get_channel(r)?);
            }
            let delta = get_channel(r)?;
            let repr = DeltaRepr::from_tag(get_u8(r)?)?;
            Some(NormStats { state, delta, repr })
        }
        t => return Err(Error::Format(format!("bad normalization flag {t}"))),
    };
    let name_len = checked_len(get_u32(r)? as u64, 1 << 16, "system name byte")?;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let system = String::from_utf8(name)
        .map_err(|_| Error::Format("system name is not valid UTF-8".into()))?;
    let mut bursts = Vec::with_capacity(count);
    for _ in 0..count {
        let u0 = get_state(r, n)?;
        let delta1 = get_f64(r)?;
        let u1 = get_state(r, n)?;
        let delta2 = get_f64(r)?;
        let u2 = get_state(r, n)?;
        bursts.push(Burst { u0, u1, u2, delta1, delta2 });
    }
    if bursts.is_empty() {
        return Err(Error::Empty("dataset file contains no bursts".into()));
    }
    Ok(BurstDataset {
        system,
        bursts,
        domain_bounds,
        delta_range,
        delta_repr,
        seed,
        eta,
        normalized,
        norm,
    })
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &BurstDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset_to(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<BurstDataset> {
    read_dataset_from(&mut BufReader::new(File::open(path)?))
}

/// Deterministic CSV writer: fields are written verbatim (callers format
/// numbers with Rust's shortest-round-trip float display, which is stable),
/// rows end with `\n`.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Shape(format!(
                "CSV row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_bursts, normalize_dataset, DeltaSampling, Integrator};
    use crate::net::{BlockVariant, Sharing};
    use crate::systems;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_net() -> OsgNet {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        OsgNet::new(3, &[8, 6], 2, BlockVariant::Multiscale, Sharing::Recursive, &mut rng).unwrap()
    }

    fn net_bytes(net: &OsgNet) -> Vec<u8> {
        let mut buf = Vec::new();
        write_net_to(&mut buf, net).unwrap();
        buf
    }

    #[test]
    fn network_round_trip_is_bitwise() {
        let net = sample_net();
        let bytes = net_bytes(&net);
        let back = read_net_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(net_bytes(&back), bytes);
        assert_eq!(back.state_dim(), 3);
        assert_eq!(back.num_blocks(), 2);
        assert_eq!(back.variant(), BlockVariant::Multiscale);
        assert_eq!(back.sharing(), Sharing::Recursive);
    }

    #[test]
    fn recurrent_net_round_trips_single_stored_block() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let net =
            OsgNet::new(2, &[5], 4, BlockVariant::Standard, Sharing::Recurrent, &mut rng).unwrap();
        let bytes = net_bytes(&net);
        let back = read_net_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.stored_blocks().len(), 1);
        assert_eq!(back.num_blocks(), 4);
        assert_eq!(net_bytes(&back), bytes);
    }

    #[test]
    fn corrupt_magic_and_truncation_are_rejected() {
        let net = sample_net();
        let mut bytes = net_bytes(&net);
        bytes[0] = b'X';
        assert!(matches!(read_net_from(&mut bytes.as_slice()), Err(Error::Format(_))));
        let good = net_bytes(&net);
        let truncated = &good[..good.len() / 2];
        assert!(read_net_from(&mut &truncated[..]).is_err());
    }

    #[test]
    fn dataset_round_trip_preserves_everything() {
        let sys = systems::linear();
        let mut ds = make_bursts(
            &sys,
            &Integrator::Rk4 { dt: 1e-3 },
            &DeltaSampling::Uniform { min: 0.05, max: 0.15 },
            15,
            42,
        )
        .unwrap();
        normalize_dataset(&mut ds).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &ds).unwrap();
        let back = read_dataset_from(&mut buf.as_slice()).unwrap();
        assert_eq!(ds, back);
        // Deterministic bytes: writing the same dataset twice is identical.
        let mut buf2 = Vec::new();
        write_dataset_to(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let net = sample_net();
        let net_path = dir.path().join("model.osgnet");
        write_net(&net_path, &net).unwrap();
        let back = read_net(&net_path).unwrap();
        assert_eq!(net_bytes(&back), net_bytes(&net));

        let sys = systems::linear();
        let ds = make_bursts(
            &sys,
            &Integrator::Rk4 { dt: 1e-3 },
            &DeltaSampling::Uniform { min: 0.05, max: 0.15 },
            4,
            1,
        )
        .unwrap();
        let ds_path = dir.path().join("data.osgdat");
        write_dataset(&ds_path, &ds).unwrap();
        assert_eq!(read_dataset(&ds_path).unwrap(), ds);

        let csv_path = dir.path().join("h.csv");
        write_csv(
            &csv_path,
            &["epoch", "loss"],
            &[vec!["0".into(), "1.5".into()], vec!["50".into(), "0.25".into()]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text, "epoch,loss\n0,1.5\n50,0.25\n");
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_csv(dir.path().join("bad.csv"), &["a", "b"], &[vec!["1".into()]]);
        assert!(err.is_err());
    }
}
