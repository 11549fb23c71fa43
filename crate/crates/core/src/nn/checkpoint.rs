//! Parameter checkpoint files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      4 bytes  "OGRL"
//! version    u32      1
//! n_sizes    u32
//! sizes      n_sizes × u32
//! hidden     u8       0 = relu, 1 = tanh
//! output     u8       0 = identity, 1 = sigmoid
//! params     f64 …    per layer: weights row-major, then biases
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{HiddenActivation, MlpNetwork, NnError, OutputActivation, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OGRL";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &MlpNetwork, mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + net.num_params() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.layer_sizes().len() as u32).to_le_bytes());
    for &s in net.layer_sizes() {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    buf.push(net.hidden_activation().tag());
    buf.push(net.output_activation().tag());
    for group in net.param_groups() {
        for x in group {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| NnError::Io(e.to_string()))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<MlpNetwork> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| NnError::Io(e.to_string()))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let n = cur.u32()? as usize;
    let mut sizes = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        sizes.push(cur.u32()? as usize);
    }
    let hidden = HiddenActivation::from_tag(cur.u8()?)?;
    let output = OutputActivation::from_tag(cur.u8()?)?;
    let mut net = MlpNetwork::zeros(&sizes, hidden, output)?;
    for group in net.param_groups_mut() {
        for x in group.iter_mut() {
            *x = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        }
    }
    let rest = bytes.len() - cur.pos;
    if rest != 0 {
        return Err(NnError::TrailingBytes(rest));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &MlpNetwork, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf)?;
    fs::write(path, buf).map_err(|e| NnError::Io(e.to_string()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpNetwork> {
    let file = fs::File::open(path).map_err(|e| NnError::Io(e.to_string()))?;
    read_checkpoint(std::io::BufReader::new(file))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(NnError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(NnError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> MlpNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        MlpNetwork::new(
            &[4, 6, 2],
            HiddenActivation::Tanh,
            OutputActivation::Sigmoid,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_checkpoint(&net(), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"OGRL");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        // 3 sizes, 2 activation bytes, 4*6+6+6*2+2 = 44 params
        assert_eq!(buf.len(), 12 + 12 + 2 + 44 * 8);
        assert_eq!(buf[24], 1);
        assert_eq!(buf[25], 1);
    }

    #[test]
    fn round_trip_is_exact() {
        let n = net();
        let mut buf = Vec::new();
        write_checkpoint(&n, &mut buf).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, n);
        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupted_inputs_are_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&net(), &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert_eq!(read_checkpoint(&bad[..]).unwrap_err(), NnError::BadMagic);

        let mut bad = buf.clone();
        bad[4] = 7;
        assert_eq!(
            read_checkpoint(&bad[..]).unwrap_err(),
            NnError::UnsupportedVersion(7)
        );

        assert_eq!(
            read_checkpoint(&buf[..buf.len() - 3]).unwrap_err(),
            NnError::Truncated
        );

        let mut bad = buf.clone();
        bad.push(0);
        assert_eq!(read_checkpoint(&bad[..]).unwrap_err(), NnError::TrailingBytes(1));

        let mut bad = buf;
        bad[24] = 9;
        assert_eq!(
            read_checkpoint(&bad[..]).unwrap_err(),
            NnError::UnknownActivation(9)
        );
    }
}
