//! The two-party verification exchange.
//!
//! ```text
//! holder                               prover
//!   TPC_HELLO(id, pairs, slots, t, h) ->
//!                                      <- TPC_GARBLED(F, d, X_P)
//!                                      <- OT_SENDER_INIT(A)
//!   OT_RECEIVER_CHOICE(B_1..B_n)      ->
//!                                      <- OT_SENDER_PAYLOAD
//! ```
//!
//! The prover is the garbler and never sees the holder's inputs or the
//! output. The holder compares the decoded match count against `k` itself.

use rand::{CryptoRng, RngCore};

use super::circuit::{bytes_to_bits, from_bits, BooleanCircuit};
use super::garble::{self, DecodingInfo, EncodingInfo, GarbledCircuit, WireLabel};
use super::ot::{OtReceiver, OtSender};
use super::verify::{build_verify_circuit, holder_inputs, slots_for, ReducedParams, PAIR_BYTES};
use super::GcError;
use crate::crypto::AssetId;
use crate::freqywm::TokenHistogram;
use crate::wire::{AbortCode, Message};

/// Holder (evaluator) side.
pub struct HolderSession {
    params: ReducedParams,
    circuit: BooleanCircuit,
    inputs: Vec<bool>,
    garbled: Option<(GarbledCircuit, DecodingInfo, Vec<WireLabel>)>,
    receiver: Option<OtReceiver>,
}

impl Drop for HolderSession {
    fn drop(&mut self) {
        use zeroize::Zeroize;
        self.inputs.zeroize();
    }
}

impl HolderSession {
    /// Prepares the circuit for `share` and `hist` and returns the hello.
    pub fn start(id: AssetId, share: &[u8], hist: &TokenHistogram, tolerance: u32) -> Result<(Self, Message), GcError> {
        if share.is_empty() || !share.len().is_multiple_of(PAIR_BYTES) {
            return Err(GcError::Params(format!(
                "token share of {} bytes is not a whole number of pairs",
                share.len()
            )));
        }
        let params = ReducedParams {
            pairs: share.len() / PAIR_BYTES,
            slots: slots_for(hist.len()),
            tolerance,
        };
        let circuit = build_verify_circuit(&params)?;
        let inputs = holder_inputs(share, hist, &params)?;
        let hello = Message::TpcHello {
            id,
            pairs: params.pairs as u16,
            slots: params.slots as u32,
            t: tolerance,
            circuit_hash: circuit.hash(),
        };
        let session = Self {
            params,
            circuit,
            inputs,
            garbled: None,
            receiver: None,
        };
        Ok((session, hello))
    }

    pub fn params(&self) -> ReducedParams {
        self.params
    }

    pub fn circuit(&self) -> &BooleanCircuit {
        &self.circuit
    }

    pub fn on_garbled(&mut self, msg: Message) -> Result<(), GcError> {
        let Message::TpcGarbled { tables, decode, garbler_labels } = msg else {
            return Err(GcError::Protocol(format!("expected TPC_GARBLED, got {msg:?}")));
        };
        if tables.len() != self.circuit.and_count()
            || decode.len() != self.circuit.outputs.len()
            || garbler_labels.len() != self.circuit.garbler_inputs as usize
        {
            return Err(GcError::Protocol("garbled circuit does not fit the agreed circuit".into()));
        }
        self.garbled = Some((
            GarbledCircuit::from_wire(&tables),
            DecodingInfo { bits: decode },
            garbler_labels.into_iter().map(WireLabel::from_bytes).collect(),
        ));
        Ok(())
    }

    pub fn on_sender_init<R: RngCore + CryptoRng>(&mut self, msg: Message, rng: &mut R) -> Result<Message, GcError> {
        let Message::OtSenderInit { a } = msg else {
            return Err(GcError::Protocol(format!("expected OT_SENDER_INIT, got {msg:?}")));
        };
        let (receiver, points) = OtReceiver::new(&a, &self.inputs, rng)?;
        self.receiver = Some(receiver);
        Ok(Message::OtReceiverChoice { points })
    }

    /// Completes the OTs, evaluates and returns the number of matching pairs.
    pub fn on_payload(mut self, msg: Message) -> Result<usize, GcError> {
        let Message::OtSenderPayload { pairs } = msg else {
            return Err(GcError::Protocol(format!("expected OT_SENDER_PAYLOAD, got {msg:?}")));
        };
        let receiver = self.receiver.take().ok_or_else(|| GcError::Protocol("OT payload before OT setup".into()))?;
        let (f, d, mut labels) = self
            .garbled
            .take()
            .ok_or_else(|| GcError::Protocol("OT payload before garbled circuit".into()))?;
        labels.extend(receiver.finish(&pairs)?);
        let y = garble::eval(&self.circuit, &f, &labels)?;
        Ok(from_bits(&garble::decode(&d, &y)?) as usize)
    }
}

/// Prover (garbler) side, alive between `TPC_GARBLED` and the OT payload.
pub struct ProverSession {
    encoding: EncodingInfo,
    sender: OtSender,
}

impl ProverSession {
    /// Checks the hello against the stored share, garbles, and returns the
    /// `TPC_GARBLED` and `OT_SENDER_INIT` messages.
    pub fn start<R: RngCore + CryptoRng>(
        hello: &Message,
        share: &[u8],
        rng: &mut R,
    ) -> Result<(Self, [Message; 2]), AbortCode> {
        let Message::TpcHello {
            pairs,
            slots,
            t,
            circuit_hash,
            ..
        } = hello
        else {
            return Err(AbortCode::BadFrame);
        };
        if share.len() != *pairs as usize * PAIR_BYTES {
            return Err(AbortCode::CircuitMismatch);
        }
        let params = ReducedParams {
            pairs: *pairs as usize,
            slots: *slots as usize,
            tolerance: *t,
        };
        let circuit = build_verify_circuit(&params).map_err(|_| AbortCode::Unsupported)?;
        if &circuit.hash() != circuit_hash {
            return Err(AbortCode::CircuitMismatch);
        }
        let (f, encoding, d) = garble::garble(&circuit, rng).map_err(|_| AbortCode::Internal)?;
        let own = encoding.encode_garbler(&bytes_to_bits(share)).map_err(|_| AbortCode::Internal)?;
        let sender = OtSender::new(rng);
        let garbled = Message::TpcGarbled {
            tables: f.to_wire(),
            decode: d.bits,
            garbler_labels: own.iter().map(|l| l.to_bytes()).collect(),
        };
        let init = Message::OtSenderInit { a: sender.init_message() };
        Ok((Self { encoding, sender }, [garbled, init]))
    }

    pub fn on_choice(self, msg: &Message) -> Result<Message, AbortCode> {
        let Message::OtReceiverChoice { points } = msg else {
            return Err(AbortCode::BadFrame);
        };
        let pairs = self
            .sender
            .respond(points, &self.encoding.evaluator_pairs())
            .map_err(|_| AbortCode::BadFrame)?;
        Ok(Message::OtSenderPayload {
            pairs,
        })
    }
}

/// Runs both parties in memory, passing every message through its wire
/// encoding. Returns the match count the holder decodes.
pub fn run_2pc_verify<R: RngCore + CryptoRng>(
    id: AssetId,
    holder_share: &[u8],
    prover_share: &[u8],
    hist: &TokenHistogram,
    tolerance: u32,
    rng: &mut R,
) -> Result<usize, GcError> {
    let relay = |m: &Message| Message::decode(&m.encode()).map_err(|e| GcError::Protocol(e.to_string()));
    let (mut holder, hello) = HolderSession::start(id, holder_share, hist, tolerance)?;
    let (prover, [garbled, init]) =
        ProverSession::start(&relay(&hello)?, prover_share, rng).map_err(GcError::Aborted)?;
    holder.on_garbled(relay(&garbled)?)?;
    let choice = holder.on_sender_init(relay(&init)?, rng)?;
    let payload = prover.on_choice(&relay(&choice)?).map_err(GcError::Aborted)?;
    holder.on_payload(relay(&payload)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::share;
    use crate::freqywm::{insert, match_count, preprocess, InsertParams, TokenDataset};
    use crate::gc::verify::{compile_secret, MAX_MODULUS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(rng: &mut ChaCha8Rng) -> (TokenDataset, TokenDataset, crate::freqywm::FreqySecret) {
        let words: Vec<String> = (0..500)
            .map(|_| {
                let r: f64 = rng.gen();
                format!("w{}", (r * r * 30.0) as usize)
            })
            .collect();
        let d = TokenDataset::from_strs(&words);
        let params = InsertParams {
            modulus: MAX_MODULUS,
            num_pairs: 6,
            tolerance: 0,
            budget: 2_000,
        };
        let (dw, sec) = insert(&d, rng.gen(), params, rng).unwrap();
        (d, dw, sec)
    }

    #[test]
    fn honest_runs_match_plaintext() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let (d, dw, sec) = instance(&mut rng);
            let compiled = compile_secret(&sec).unwrap();
            let (h, p) = share(&compiled).unwrap();
            for asset in [&dw, &d] {
                let hist = preprocess(asset);
                let got = run_2pc_verify(AssetId([1; 32]), h.as_bytes(), p.as_bytes(), &hist, 0, &mut rng).unwrap();
                assert_eq!(got, match_count(&hist, &sec, 0));
            }
            let hist = preprocess(&dw);
            assert_eq!(match_count(&hist, &sec, 0), 6);
        }
    }

    #[test]
    fn circuit_hash_mismatch_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let hist: TokenHistogram = [(b"a".to_vec(), 3)].into_iter().collect();
        let (_, hello) = HolderSession::start(AssetId([0; 32]), &[0; 10], &hist, 0).unwrap();
        let Message::TpcHello { id, pairs, slots, circuit_hash, .. } = hello else { unreachable!() };
        let lying = Message::TpcHello { id, pairs, slots, t: 1, circuit_hash };
        assert_eq!(ProverSession::start(&lying, &[0; 10], &mut rng).err(), Some(AbortCode::CircuitMismatch));
        assert_eq!(ProverSession::start(&hello_clone(&lying, 0, circuit_hash), &[0; 20], &mut rng).err(), Some(AbortCode::CircuitMismatch));
    }

    fn hello_clone(m: &Message, t: u32, circuit_hash: [u8; 32]) -> Message {
        let Message::TpcHello { id, pairs, slots, .. } = m else { unreachable!() };
        Message::TpcHello { id: *id, pairs: *pairs, slots: *slots, t, circuit_hash }
    }

    #[test]
    fn tampered_payload_aborts_holder() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let hist: TokenHistogram = [(b"a".to_vec(), 3)].into_iter().collect();
        let (mut holder, hello) = HolderSession::start(AssetId([0; 32]), &[7; 10], &hist, 0).unwrap();
        let (prover, [garbled, init]) = ProverSession::start(&hello, &[9; 10], &mut rng).unwrap();
        holder.on_garbled(garbled).unwrap();
        let choice = holder.on_sender_init(init, &mut rng).unwrap();
        let Message::OtSenderPayload { mut pairs } = prover.on_choice(&choice).unwrap() else { unreachable!() };
        pairs[5].0[0] ^= 1;
        pairs[5].1[0] ^= 1;
        assert!(matches!(
            holder.on_payload(Message::OtSenderPayload { pairs }),
            Err(GcError::Ot(_))
        ));
    }

    #[test]
    fn out_of_order_messages() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let hist = TokenHistogram::new();
        let (mut holder, _) = HolderSession::start(AssetId([0; 32]), &[0; 10], &hist, 0).unwrap();
        assert!(holder.on_garbled(Message::Ack).is_err());
        assert!(holder.on_sender_init(Message::Ack, &mut rng).is_err());
        assert!(HolderSession::start(AssetId([0; 32]), &[0; 11], &hist, 0).is_err());
        assert_eq!(ProverSession::start(&Message::Ack, &[0; 10], &mut rng).err(), Some(AbortCode::BadFrame));
    }
}
