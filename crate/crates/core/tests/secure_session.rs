//! The full six-step protocol under the RSA scheme.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgemarket::domain::{Money, UserId};
use edgemarket::escrow::{Escrow, SessionTerms, StartOutcome, TickOutcome};
use edgemarket::hash::sha256;
use edgemarket::ledger::{Event, TxKind};
use edgemarket::vault::{
    chunk_data, distribute, encrypt_and_sign, fetch_all, result_digest, sign_dht, AccessPolicy,
    CryptoScheme, KeyDirectory, KeySeed, RsaScheme, StorageNetwork, VaultError,
};
use edgemarket::Env;

#[test]
fn rsa_session_from_deposit_to_settlement() {
    let scheme = RsaScheme { bits: 1024 };
    let (consumer, provider) = (UserId(1), UserId(2));
    let storage = vec![UserId(10), UserId(11), UserId(12)];
    let ck = scheme.keygen(KeySeed::Deterministic(1)).unwrap();
    let pk = scheme.keygen(KeySeed::Deterministic(2)).unwrap();
    let mut env = Env::default();
    let mut escrow = Escrow::default();
    let id = escrow
        .open_session(
            SessionTerms {
                consumer,
                compute_provider: provider,
                storage_providers: storage.clone(),
                compute_rate: Money::from_micros(1_000),
                storage_rate: Money::from_micros(200),
                deposit: Money::from_micros(10_000),
            },
            &mut env,
        )
        .unwrap();
    escrow
        .record_key_exchange(id, ck.public.clone(), &mut env)
        .unwrap();

    let data: Vec<u8> = (0..3000u32).map(|i| (i * 7 % 251) as u8).collect();
    let mut policy = AccessPolicy::new(id);
    policy
        .trust(consumer, ck.public.clone())
        .trust(provider, pk.public.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let chunks = encrypt_and_sign(
        &scheme,
        &chunk_data(&data, 512).unwrap(),
        &ck,
        &policy,
        &mut rng,
    )
    .unwrap();
    let mut net = StorageNetwork::new();
    let dht = distribute(&mut net, id, &chunks, &storage, 2).unwrap();
    escrow
        .record_distribution(id, sign_dht(&scheme, &dht, &ck).unwrap(), &mut env)
        .unwrap();
    assert_eq!(
        escrow.verify_and_start(id, &scheme, &mut env).unwrap(),
        StartOutcome::Started
    );

    let keys = KeyDirectory::from_chunks(&chunks);
    net.set_online(UserId(11), false);
    let fetched = fetch_all(
        &scheme, provider, &pk, &ck.public, &dht, &policy, &keys, &net,
    )
    .unwrap();
    assert_eq!(fetched, data);
    let result = sha256(&fetched).0;
    let at = env.ledger.record(&Event::ResultDigest {
        digest: result_digest(&result),
    });
    assert!(env.ledger.verify_result(&result, at).unwrap());
    assert!(!env.ledger.verify_result(b"forged", at).unwrap());

    let settled = loop {
        if let TickOutcome::Settled(s) = escrow.tick(id, &mut env).unwrap() {
            break s;
        }
    };
    // 10_000 / (1_000 + 3·200) = 6 full ticks, 400 left over.
    assert_eq!(settled.ticks, 6);
    assert_eq!(settled.compute, Money::from_micros(6_000));
    assert_eq!(settled.refund, Money::from_micros(400));
    assert_eq!(settled.total().unwrap(), Money::from_micros(10_000));
    assert_eq!(env.ledger.count(TxKind::TickPayment), 6);
    assert!(env.ledger.verify_chain());
}

#[test]
fn provider_with_wrong_consumer_key_rejects_chunks() {
    let scheme = RsaScheme { bits: 1024 };
    let ck = scheme.keygen(KeySeed::Deterministic(5)).unwrap();
    let pk = scheme.keygen(KeySeed::Deterministic(6)).unwrap();
    let imposter = scheme.keygen(KeySeed::Deterministic(7)).unwrap();
    let mut policy = AccessPolicy::new(1);
    policy
        .trust(UserId(1), ck.public.clone())
        .trust(UserId(2), pk.public.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let chunks = encrypt_and_sign(
        &scheme,
        &chunk_data(b"payload", 4).unwrap(),
        &ck,
        &policy,
        &mut rng,
    )
    .unwrap();
    let mut net = StorageNetwork::new();
    let dht = distribute(&mut net, 1, &chunks, &[UserId(9)], 1).unwrap();
    let keys = KeyDirectory::from_chunks(&chunks);
    let err = fetch_all(
        &scheme,
        UserId(2),
        &pk,
        &imposter.public,
        &dht,
        &policy,
        &keys,
        &net,
    )
    .unwrap_err();
    assert_eq!(err, VaultError::BadSignature { task_id: 0 }.into());
}
