//! Encrypts a file-sized blob into signed chunks, spreads two replicas over
//! four storage nodes, knocks each node out in turn and reassembles.
//!
//! cargo run --release --example vault_roundtrip -- [bytes] [rsa]

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgemarket::domain::UserId;
use edgemarket::vault::{
    chunk_data, distribute, encrypt_and_sign, fetch_all, fetch_chunk, AccessPolicy, CryptoScheme,
    KeyDirectory, KeySeed, RsaScheme, StorageNetwork, ToyScheme,
};

fn main() -> Result<(), edgemarket::Error> {
    let mut args = std::env::args().skip(1);
    let len: usize = args
        .next()
        .map(|s| s.parse().expect("byte count"))
        .unwrap_or(200_000);
    let scheme: Box<dyn CryptoScheme> = match args.next().as_deref() {
        Some("rsa") => Box::new(RsaScheme::default()),
        _ => Box::new(ToyScheme),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut data = vec![0u8; len];
    rng.fill_bytes(&mut data);

    let (owner, reader, outsider) = (UserId(1), UserId(2), UserId(3));
    let owner_key = scheme.keygen(KeySeed::Deterministic(10))?;
    let reader_key = scheme.keygen(KeySeed::Deterministic(11))?;
    let mut policy = AccessPolicy::new(7);
    policy
        .trust(owner, owner_key.public.clone())
        .trust(reader, reader_key.public.clone());

    let chunks = encrypt_and_sign(
        scheme.as_ref(),
        &chunk_data(&data, 16 * 1024)?,
        &owner_key,
        &policy,
        &mut rng,
    )?;
    let nodes: Vec<UserId> = (100..104).map(UserId).collect();
    let mut net = StorageNetwork::new();
    let dht = distribute(&mut net, 7, &chunks, &nodes, 2)?;
    let keys = KeyDirectory::from_chunks(&chunks);
    println!(
        "{} scheme, {} chunks, DHT is {} canonical bytes",
        scheme.name(),
        chunks.len(),
        dht.canonical_bytes().len()
    );
    for n in net.nodes() {
        println!("node {} holds {} ciphertext blobs", n.id, n.blob_count());
    }

    for &down in &nodes {
        net.set_online(down, false);
        let got = fetch_all(
            scheme.as_ref(),
            reader,
            &reader_key,
            &owner_key.public,
            &dht,
            &policy,
            &keys,
            &net,
        )?;
        println!(
            "node {down} offline: reassembled {} bytes, intact: {}",
            got.len(),
            got == data
        );
        net.set_online(down, true);
    }
    println!(
        "outsider fetch: {:?}; outsider fetch of a missing chunk: {:?}",
        fetch_chunk(outsider, 0, &dht, &policy, &keys, &net).unwrap_err(),
        fetch_chunk(outsider, 9_999, &dht, &policy, &keys, &net).unwrap_err()
    );
    Ok(())
}
