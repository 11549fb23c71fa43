//! Collects a pool, saves it, reloads it and shows that a corrupted copy is
//! rejected.
//!
//!     cargo run --release --example pool_roundtrip -- [episodes]

use offgrasp::env::{collect_random_grasps, EnvConfig};
use offgrasp::replay::{load_pool, read_pool, save_pool, write_pool, ReplayPool};

fn main() {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let env = EnvConfig::default();
    let mut pool = ReplayPool::for_grasping(env.descriptor_hash());
    pool.extend(collect_random_grasps(&env, n, 0).expect("collect")).expect("extend");

    let dir = std::env::temp_dir().join("offgrasp_pool_demo");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("pool.bin");
    save_pool(&pool, &path).expect("save");
    let bytes = std::fs::read(&path).unwrap();
    let back = load_pool(&path).expect("load");
    let mut again = Vec::new();
    write_pool(&back, &mut again).unwrap();
    println!(
        "{} episodes, {} transitions, {} bytes, identical after reload: {}",
        back.num_episodes(),
        back.num_transitions(),
        bytes.len(),
        again == bytes
    );

    let mut corrupt = bytes.clone();
    corrupt[bytes.len() / 3] ^= 1;
    println!("flipped bit: {}", read_pool(corrupt.as_slice()).unwrap_err());
    println!("truncated:   {}", read_pool(&bytes[..bytes.len() - 100]).unwrap_err());
}
