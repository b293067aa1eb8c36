mod common;

use common::*;
use puppy_core::asset::{Mode, Scheme, TokenRecord};
use puppy_core::crypto::AssetId;
use puppy_core::wire::{AbortCode, ErrCode, Message};
use puppy_prover::config::RateLimitConfig;

#[test]
fn registration_is_authenticated_unique_and_durable() {
    let fx = Fixture::new(Mode::Tee);
    let a = make_asset(Mode::Tee, 1);
    let run = fx.start();
    let mut s = connect(run.addr());
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Ack);
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Err(ErrCode::Duplicate));

    let b = make_asset(Mode::Tee, 2);
    assert_eq!(call(&mut s, &register_msg(&[7; 32], &b.record)), Message::Err(ErrCode::Unauthorized));
    // A direct-share record has no place in a tee-mode store.
    let direct = make_asset(Mode::TeeDirect, 3);
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &direct.record)), Message::Err(ErrCode::Malformed));
    drop(s);
    run.stop();

    let run = fx.start();
    assert_eq!(run.stats().tokens, 1);
    assert!(res(tee_verify(&fx, run.addr(), a.id, &a.dw, &a.tkh)));
    let mut s = connect(run.addr());
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Err(ErrCode::Duplicate));
    run.stop();
}

#[test]
fn tee_paths_over_the_enclave_process() {
    for mode in [Mode::Tee, Mode::TeeDirect] {
        let fx = Fixture::new(mode);
        let a = make_asset(mode, 10);
        let other = make_asset(mode, 11);
        let run = fx.start();
        let mut s = connect(run.addr());
        assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Ack);

        match tee_verify(&fx, run.addr(), a.id, &a.dw, &a.tkh) {
            Outcome::Res(r, stats) => {
                assert!(r, "{mode}: watermarked asset must verify");
                assert!(stats.detect_ns > 0 && stats.receive_ns > 0);
            }
            Outcome::Abort(c) => panic!("{mode}: aborted with {c}"),
        }
        assert!(!res(tee_verify(&fx, run.addr(), a.id, &other.dw, &a.tkh)), "{mode}: unrelated asset");
        match tee_verify(&fx, run.addr(), AssetId([0xEE; 32]), &a.dw, &a.tkh) {
            Outcome::Abort(c) => assert_eq!(c, AbortCode::UnknownId),
            Outcome::Res(..) => panic!("unknown id verified"),
        }
        // A wrong holder share cannot reconstruct the secret.
        let mut bad = a.tkh.clone();
        bad[0] ^= 1;
        match tee_verify(&fx, run.addr(), a.id, &a.dw, &bad) {
            Outcome::Abort(c) => assert_eq!(c, AbortCode::DecryptFailed, "{mode}"),
            Outcome::Res(r, _) => assert!(!r, "{mode}: corrupted share accepted"),
        }
        let st = run.stats();
        assert_eq!(st.verify_sessions, 4);
        run.stop();
    }
}

#[test]
fn several_verifications_share_one_connection() {
    let fx = Fixture::new(Mode::Tee);
    let a = make_asset(Mode::Tee, 20);
    let run = fx.start();
    let mut s = connect(run.addr());
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Ack);
    for _ in 0..3 {
        assert!(res(tee_verify_on(&mut s, &fx, a.id, &a.dw, &a.tkh)));
    }
    run.stop();
}

#[test]
fn thousand_consecutive_verifications() {
    let fx = Fixture::new(Mode::Tee);
    let a = make_asset(Mode::Tee, 30);
    let run = fx.start();
    let mut s = connect(run.addr());
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Ack);
    let ok = (0..1000)
        .filter(|_| res(tee_verify(&fx, run.addr(), a.id, &a.dw, &a.tkh)))
        .count();
    assert_eq!(ok, 1000);
    assert_eq!(run.stats().enclave_verify_calls, 1000);
    run.stop();
}

#[test]
fn cache_front_end() {
    let fx = Fixture::new(Mode::Tee);
    let a = make_asset(Mode::Tee, 40);
    let run = fx.start();
    let mut s = connect(run.addr());
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Ack);
    let h = [5u8; 32];
    let miss = Message::CacheRes {
        present: false,
        res: false,
    };

    // Miss, verify (opting in), then the same query is answered without the enclave.
    assert_eq!(call(&mut s, &Message::CacheQry { id: a.id, h, sim: 90.0 }), miss);
    assert!(res(tee_verify_on(&mut s, &fx, a.id, &a.dw, &a.tkh)));
    let calls = run.stats().enclave_verify_calls;
    assert_eq!(
        call(&mut s, &Message::CacheQry { id: a.id, h, sim: 90.0 }),
        Message::CacheRes { present: true, res: true }
    );
    assert_eq!(
        call(&mut s, &Message::CacheQry { id: a.id, h, sim: 80.0 }),
        Message::CacheRes { present: true, res: true }
    );
    // A positive is not served for a closer match than the one verified.
    assert_eq!(call(&mut s, &Message::CacheQry { id: a.id, h, sim: 95.0 }), miss);
    assert_eq!(run.stats().enclave_verify_calls, calls);

    // Below the threshold nothing is cached.
    let low = [6u8; 32];
    assert_eq!(call(&mut s, &Message::CacheQry { id: a.id, h: low, sim: 40.0 }), miss);
    assert!(res(tee_verify_on(&mut s, &fx, a.id, &a.dw, &a.tkh)));
    assert_eq!(call(&mut s, &Message::CacheQry { id: a.id, h: low, sim: 40.0 }), miss);

    // Without a preceding miss the host never learns the result.
    let puts = run.stats().cache_puts;
    assert!(res(tee_verify_on(&mut s, &fx, a.id, &a.dw, &a.tkh)));
    assert_eq!(run.stats().cache_puts, puts);
    run.stop();
}

#[test]
fn rate_limit_per_id() {
    let mut fx = Fixture::new(Mode::Tee);
    fx.cfg.rate_limit = Some(RateLimitConfig {
        burst: 2,
        per_second: 0.001,
    });
    let a = make_asset(Mode::Tee, 50);
    let run = fx.start();
    let mut s = connect(run.addr());
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Ack);
    assert!(res(tee_verify(&fx, run.addr(), a.id, &a.dw, &a.tkh)));
    assert!(res(tee_verify(&fx, run.addr(), a.id, &a.dw, &a.tkh)));
    assert!(matches!(
        tee_verify(&fx, run.addr(), a.id, &a.dw, &a.tkh),
        Outcome::Abort(AbortCode::RateLimited)
    ));
    run.stop();
}

#[test]
fn bad_frames_abort_and_close() {
    let fx = Fixture::new(Mode::Tee);
    let run = fx.start();
    for bytes in [
        vec![0, 0, 0, 1, 0x7F],
        vec![0, 0, 0, 0],
        vec![0xFF, 0xFF, 0xFF, 0xFF],
        vec![0, 0, 0, 2, 0x02, 0x00],
        Message::Ack.encode(),
        Message::VerifyReq(vec![1, 2, 3]).encode(),
        Message::RaFinish {
            client_epk: [1; 32],
            mac: [2; 16],
        }
        .encode(),
    ] {
        let mut s = connect(run.addr());
        write_raw(&mut s, &bytes);
        let reply = puppy_core::wire::read_message(&mut s).unwrap();
        assert_eq!(reply, Message::Abort(AbortCode::BadFrame), "for {}", hex::encode(&bytes));
        assert!(closed(&mut s));
    }
    // Protocol messages for another mode are refused without closing.
    let mut s = connect(run.addr());
    let hello = Message::TpcHello {
        id: AssetId([1; 32]),
        pairs: 1,
        slots: 16,
        t: 0,
        circuit_hash: [0; 32],
    };
    assert_eq!(call(&mut s, &hello), Message::Abort(AbortCode::Unsupported));
    assert!(matches!(call(&mut s, &Message::CacheQry { id: AssetId([1; 32]), h: [0; 32], sim: 1.0 }), Message::CacheRes { .. }));
    run.stop();
}

#[test]
fn failed_attestation_finish_aborts() {
    let fx = Fixture::new(Mode::Tee);
    let run = fx.start();
    let mut s = connect(run.addr());
    let Message::RaReport { .. } = call(&mut s, &Message::RaHello { nonce: [3; 32] }) else {
        panic!("no report")
    };
    let reply = call(
        &mut s,
        &Message::RaFinish {
            client_epk: [9; 32],
            mac: [0; 16],
        },
    );
    assert_eq!(reply, Message::Abort(AbortCode::Attestation));
    run.stop();
}

#[test]
fn http_api() {
    let fx = Fixture::new(Mode::TeeDirect);
    let a = make_asset(Mode::TeeDirect, 60);
    let run = fx.start();
    let base = run.http();
    let psk = fx.psk();
    let measurement = hex::encode(fx.measurement());
    run.rt.block_on(async {
        let c = reqwest::Client::new();
        let health: serde_json::Value = c.get(format!("{base}/healthz")).send().await.unwrap().json().await.unwrap();
        assert_eq!(health["status"], "ok");
        assert_eq!(health["mode"], "tee-direct");
        assert_eq!(health["measurement"], measurement.as_str());

        let Message::Register { mac, .. } = register_msg(&psk, &a.record) else { unreachable!() };
        let body = puppy_prover::http::RegisterBody {
            record: (&a.record).into(),
            mac: hex::encode(mac),
        };
        let post = |b: &puppy_prover::http::RegisterBody| c.post(format!("{base}/v1/tokens")).json(b).send();
        assert_eq!(post(&body).await.unwrap().status(), 201);
        assert_eq!(post(&body).await.unwrap().status(), 409);
        let forged = puppy_prover::http::RegisterBody {
            record: (&make_asset(Mode::TeeDirect, 61).record).into(),
            mac: hex::encode([0u8; 32]),
        };
        assert_eq!(post(&forged).await.unwrap().status(), 401);

        let info: serde_json::Value = c
            .get(format!("{base}/v1/tokens/{}", a.id.to_hex()))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(info["share_len"], a.record.share.len());
        assert_eq!(info["has_c_sec"], false);
        assert!(info.get("share").is_none());
        let missing = c.get(format!("{base}/v1/tokens/{}", "00".repeat(32))).send().await.unwrap();
        assert_eq!(missing.status(), 404);
        assert_eq!(c.get(format!("{base}/v1/tokens/xyz")).send().await.unwrap().status(), 400);

        let q = serde_json::json!({ "id": a.id, "h": "11".repeat(32), "sim": 90.0 });
        let ans: serde_json::Value =
            c.post(format!("{base}/v1/cache/query")).json(&q).send().await.unwrap().json().await.unwrap();
        assert_eq!(ans, serde_json::json!({ "present": false }));
        let csv = c.get(format!("{base}/v1/cache/snapshot")).send().await.unwrap().text().await.unwrap();
        assert_eq!(csv, "h_hex,id_hex,res,sim,position\n");
        let stats: serde_json::Value = c.get(format!("{base}/v1/stats")).send().await.unwrap().json().await.unwrap();
        assert_eq!(stats["registered"], 1);
        assert_eq!(stats["cache_misses"], 1);
    });
    // Registered over HTTP, verified over the wire.
    assert!(res(tee_verify(&fx, run.addr(), a.id, &a.dw, &a.tkh)));
    run.stop();
}

#[test]
fn mode_env_overrides_config() {
    let fx = Fixture::new(Mode::Tee);
    let path = fx.dir.path().join("prover.toml");
    let text = format!(
        "listen = \"127.0.0.1:0\"\nstore = \"tokens.log\"\nmanufacturer_key = {:?}\nowner_psk = {:?}\n",
        fx.keys.manufacturer_key, fx.keys.owner_key
    );
    std::fs::write(&path, text).unwrap();
    // Only this test touches the variable.
    std::env::set_var(puppy_prover::config::MODE_ENV, "2pc");
    let cfg = puppy_prover::Config::load(&path);
    std::env::remove_var(puppy_prover::config::MODE_ENV);
    assert_eq!(cfg.unwrap().mode, Mode::TwoPc);
    assert_eq!(puppy_prover::Config::load(&path).unwrap().mode, Mode::Tee);
}

#[test]
fn store_survives_torn_write() {
    let fx = Fixture::new(Mode::TeeDirect);
    let a = make_asset(Mode::TeeDirect, 70);
    let run = fx.start();
    let mut s = connect(run.addr());
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Ack);
    run.stop();
    // Simulate a crash halfway through a second append.
    let mut log = std::fs::read(&fx.cfg.store).unwrap();
    let b = make_asset(Mode::TeeDirect, 71);
    let rec: TokenRecord = b.record;
    let body = rec.encode();
    log.extend_from_slice(&(body.len() as u32).to_be_bytes());
    log.extend_from_slice(&body[..body.len() / 2]);
    std::fs::write(&fx.cfg.store, log).unwrap();
    let run = fx.start();
    assert_eq!(run.stats().tokens, 1);
    assert!(res(tee_verify(&fx, run.addr(), a.id, &a.dw, &a.tkh)));
    assert_eq!(rec.scheme, Scheme::FreqyWm);
    run.stop();
}

#[test]
fn garbled_circuit_path() {
    let fx = Fixture::new(Mode::TwoPc);
    let a = make_asset(Mode::TwoPc, 80);
    let other = make_asset(Mode::TwoPc, 81);
    let tol = fx.cfg.verifier.freqy_tolerance;
    let run = fx.start();
    let mut s = connect(run.addr());
    assert_eq!(call(&mut s, &register_msg(&fx.psk(), &a.record)), Message::Ack);

    for dw in [&a.dw, &other.dw] {
        let hist = puppy_core::freqywm::preprocess(&puppy_core::freqywm::TokenDataset::parse(dw).unwrap());
        let expected = puppy_core::freqywm::match_count(&hist, &a.secret, tol);
        assert_eq!(tpc_verify(run.addr(), a.id, dw, &a.tkh, tol as u32).unwrap(), expected);
    }
    let own = tpc_verify(run.addr(), a.id, &a.dw, &a.tkh, tol as u32).unwrap();
    assert_eq!(own, a.secret.pairs.len());
    assert_eq!(
        tpc_verify(run.addr(), AssetId([0xAB; 32]), &a.dw, &a.tkh, tol as u32),
        Err(AbortCode::UnknownId)
    );

    // The holder may report a result only after a miss and a finished exchange.
    let h = [4u8; 32];
    let report = Message::CacheReport { id: a.id, h, sim: 90.0, res: true };
    assert_eq!(call(&mut s, &report), Message::Err(ErrCode::Unauthorized));
    assert!(matches!(call(&mut s, &Message::CacheQry { id: a.id, h, sim: 90.0 }), Message::CacheRes { present: false, .. }));
    assert_eq!(call(&mut s, &report), Message::Err(ErrCode::Unauthorized));
    tpc_verify_on(&mut s, a.id, &a.dw, &a.tkh, tol as u32).unwrap();
    assert_eq!(call(&mut s, &report), Message::Ack);
    assert_eq!(
        call(&mut s, &Message::CacheQry { id: a.id, h, sim: 90.0 }),
        Message::CacheRes { present: true, res: true }
    );
    // The unknown id never started a session.
    assert_eq!(run.stats().tpc_sessions, 4);
    // Enclave messages are refused in this mode.
    assert_eq!(call(&mut s, &Message::RaHello { nonce: [0; 32] }), Message::Abort(AbortCode::Unsupported));
    run.stop();
}
