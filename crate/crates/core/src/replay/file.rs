//! Binary pool files.
//!
//! ```text
//! magic            4 bytes "OGPL"
//! version          u32
//! descriptor hash  u64   fingerprint of the environment configuration
//! episode count    u64
//! initial_random   u64
//! on_policy_added  u64
//! capacity         u64   0 = uncapped
//! binary rewards   u8
//! episodes         count × (u64 byte length, payload)
//! crc32            u32   over every preceding byte
//! ```
//!
//! Everything is little-endian; reals are IEEE-754 binary64, so a
//! save → load → save cycle reproduces the file byte for byte.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Episode, Features, PoolCounters, PoolError, Pose, Provenance, ReplayPool, Transition};

pub const POOL_MAGIC: &[u8; 4] = b"OGPL";
pub const POOL_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 8 * 5 + 1;

pub fn write_pool<W: Write>(pool: &ReplayPool, mut out: W) -> Result<(), PoolError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(POOL_MAGIC);
    put_u32(&mut buf, POOL_VERSION);
    put_u64(&mut buf, pool.descriptor_hash());
    put_u64(&mut buf, pool.num_episodes() as u64);
    let c = pool.counters();
    put_u64(&mut buf, c.initial_random);
    put_u64(&mut buf, c.on_policy_added);
    put_u64(&mut buf, pool.capacity().unwrap_or(0) as u64);
    buf.push(u8::from(pool.binary_rewards()));
    let mut payload = Vec::new();
    for e in pool.episodes() {
        payload.clear();
        encode_episode(e, &mut payload);
        put_u64(&mut buf, payload.len() as u64);
        buf.extend_from_slice(&payload);
    }
    let crc = crc32fast::hash(&buf);
    put_u32(&mut buf, crc);
    out.write_all(&buf).map_err(|e| PoolError::Io(e.to_string()))
}

pub fn read_pool<R: Read>(mut input: R) -> Result<ReplayPool, PoolError> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| PoolError::Io(e.to_string()))?;
    if bytes.len() >= 4 && &bytes[..4] != POOL_MAGIC {
        return Err(PoolError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(PoolError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != POOL_VERSION {
        return Err(PoolError::VersionMismatch {
            found: version,
            expected: POOL_VERSION,
        });
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(PoolError::Checksum { stored, computed });
    }

    let mut cur = Cursor {
        bytes: &bytes[..body_len],
        pos: 8,
    };
    let descriptor_hash = cur.u64()?;
    let count = cur.u64()? as usize;
    let counters = PoolCounters {
        initial_random: cur.u64()?,
        on_policy_added: cur.u64()?,
    };
    let capacity = match cur.u64()? {
        0 => None,
        n => Some(n as usize),
    };
    let binary_rewards = cur.u8()? != 0;
    let mut episodes = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = cur.u64()? as usize;
        let mut ep = Cursor {
            bytes: cur.take(len)?,
            pos: 0,
        };
        let episode = decode_episode(&mut ep)?;
        if ep.pos != ep.bytes.len() {
            return Err(PoolError::InvalidEpisode("episode record has trailing bytes".into()));
        }
        episode.validate(binary_rewards)?;
        episodes.push(episode);
    }
    if cur.pos != cur.bytes.len() {
        return Err(PoolError::InvalidEpisode("unexpected bytes after last episode".into()));
    }
    Ok(ReplayPool::from_parts(
        episodes,
        capacity,
        counters,
        binary_rewards,
        descriptor_hash,
    ))
}

pub fn save_pool(pool: &ReplayPool, path: impl AsRef<Path>) -> Result<(), PoolError> {
    let mut buf = Vec::new();
    write_pool(pool, &mut buf)?;
    fs::write(path, buf).map_err(|e| PoolError::Io(e.to_string()))
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<ReplayPool, PoolError> {
    let bytes = fs::read(path).map_err(|e| PoolError::Io(e.to_string()))?;
    read_pool(&bytes[..])
}

fn encode_episode(e: &Episode, buf: &mut Vec<u8>) {
    put_u64(buf, e.id);
    buf.push(e.provenance.tag());
    put_f64(buf, e.outcome);
    put_pose(buf, e.final_pose);
    put_u32(buf, e.object_seeds.len() as u32);
    for &s in &e.object_seeds {
        put_u64(buf, s);
    }
    put_u32(buf, e.transitions.len() as u32);
    for t in &e.transitions {
        put_u32(buf, t.timestep);
        put_vec(buf, &t.obs);
        put_vec(buf, &t.action);
        put_f64(buf, t.reward);
        put_vec(buf, &t.next_obs);
        buf.push(u8::from(t.done));
        put_pose(buf, t.gripper_pose);
        put_u64(buf, t.episode_id);
    }
}

fn decode_episode(cur: &mut Cursor<'_>) -> Result<Episode, PoolError> {
    let id = cur.u64()?;
    let tag = cur.u8()?;
    let provenance = Provenance::from_tag(tag)
        .ok_or_else(|| PoolError::InvalidEpisode(format!("unknown provenance tag {tag}")))?;
    let outcome = cur.f64()?;
    let final_pose = cur.pose()?;
    let n_seeds = cur.u32()? as usize;
    let object_seeds = (0..n_seeds).map(|_| cur.u64()).collect::<Result<_, _>>()?;
    let n = cur.u32()? as usize;
    let mut transitions: Vec<Transition> = Vec::with_capacity(n.min(4096));
    for _ in 0..n {
        let timestep = cur.u32()?;
        let obs = cur.vec()?;
        // reuse the previous step's next_obs allocation when they agree
        let obs: Features = match transitions.last() {
            Some(prev) if *prev.next_obs == *obs => prev.next_obs.clone(),
            _ => obs.into(),
        };
        transitions.push(Transition {
            timestep,
            obs,
            action: cur.vec()?,
            reward: cur.f64()?,
            next_obs: cur.vec()?.into(),
            done: cur.u8()? != 0,
            gripper_pose: cur.pose()?,
            episode_id: cur.u64()?,
        });
    }
    Ok(Episode {
        id,
        transitions,
        outcome,
        final_pose,
        object_seeds,
        provenance,
    })
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_vec(buf: &mut Vec<u8>, v: &[f64]) {
    put_u32(buf, v.len() as u32);
    v.iter().for_each(|&x| put_f64(buf, x));
}

fn put_pose(buf: &mut Vec<u8>, pose: Option<Pose>) {
    match pose {
        Some(p) => {
            buf.push(1);
            p.to_array().iter().for_each(|&x| put_f64(buf, x));
        }
        None => buf.push(0),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PoolError> {
        let end = self.pos.checked_add(n).ok_or(PoolError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(PoolError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PoolError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PoolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PoolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, PoolError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec(&mut self) -> Result<Vec<f64>, PoolError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(8) > self.bytes.len() - self.pos {
            return Err(PoolError::Truncated);
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn pose(&mut self) -> Result<Option<Pose>, PoolError> {
        match self.u8()? {
            0 => Ok(None),
            _ => Ok(Some(Pose::new(self.f64()?, self.f64()?, self.f64()?, self.f64()?))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::tests::episode;

    fn pool() -> ReplayPool {
        let mut pool = ReplayPool::for_grasping(0xDEAD_BEEF);
        for id in 0..6 {
            pool.add_episode(episode(id, 3 + id as usize, (id % 2) as f64, Provenance::InitialRandom))
                .unwrap();
        }
        pool.add_episode(episode(6, 2, 1.0, Provenance::OnPolicy)).unwrap();
        pool
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let p = pool();
        let mut a = Vec::new();
        write_pool(&p, &mut a).unwrap();
        let back = read_pool(&a[..]).unwrap();
        assert_eq!(back, p);
        let mut b = Vec::new();
        write_pool(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_is_a_checksum_failure() {
        let mut a = Vec::new();
        write_pool(&pool(), &mut a).unwrap();
        let cut = &a[..a.len() - 40];
        assert!(matches!(read_pool(cut), Err(PoolError::Checksum { .. })));
        assert_eq!(read_pool(&a[..20]).unwrap_err(), PoolError::Truncated);
    }

    #[test]
    fn header_errors_are_distinct() {
        let mut a = Vec::new();
        write_pool(&pool(), &mut a).unwrap();
        let mut bad = a.clone();
        bad[1] = b'x';
        assert_eq!(read_pool(&bad[..]).unwrap_err(), PoolError::BadMagic);
        let mut bad = a.clone();
        bad[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert_eq!(
            read_pool(&bad[..]).unwrap_err(),
            PoolError::VersionMismatch {
                found: 2,
                expected: 1
            }
        );
        let mut bad = a;
        let mid = bad.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(read_pool(&bad[..]), Err(PoolError::Checksum { .. })));
    }
}
