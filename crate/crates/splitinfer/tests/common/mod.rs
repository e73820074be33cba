#![allow(dead_code)]

use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use splitinfer::tcp::{run_remote, DavidServer};
use splitinfer_core::adversary::{CheatStrategy, CheatingDavid};
use splitinfer_core::protocol::{precompute_one, run_session, Message, Mode};
use splitinfer_core::rng;
use splitinfer_core::wire::{decode_frame, encode_frame, split_frames, Frame, Refusal, SessionHello};
use splitinfer_core::codec::FixedPointCodec;
use splitinfer_core::decompose::{decompose, DavidPart, Decomposition};
use splitinfer_core::field::PrimeField;
use splitinfer_core::matrix::RealMatrix;
use splitinfer_core::model::{gen_random_model_with, Activation, Layer, MlpModel, QuantizedModel};

pub struct Fixture {
    pub model: MlpModel,
    pub quant: QuantizedModel,
    pub decomp: Decomposition,
    pub david: DavidPart,
}

impl Fixture {
    pub fn build(model: MlpModel, codec: FixedPointCodec, ranks: &[usize]) -> Self {
        let quant = QuantizedModel::new(&model, codec).unwrap();
        let decomp = decompose(&model, ranks, codec).unwrap();
        let david = decomp.david_part();
        Self { model, quant, decomp, david }
    }
}

/// Seeded random model: depth 1..=max_layers, widths 1..=max_width, mixed activations.
pub fn random_fixture(seed: u64, max_layers: usize, max_width: usize) -> Fixture {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let layers = rng.random_range(1..=max_layers);
    let dims: Vec<usize> = (0..=layers).map(|_| rng.random_range(1..=max_width)).collect();
    let acts: Vec<Activation> = (0..layers)
        .map(|_| if rng.random_bool(0.5) { Activation::Relu } else { Activation::Identity })
        .collect();
    let ranks: Vec<usize> = dims.windows(2).map(|w| rng.random_range(0..=w[0].min(w[1]))).collect();
    let model = gen_random_model_with(seed, &dims, &acts).unwrap();
    let codec = FixedPointCodec::auto_bound(PrimeField::mersenne61(), 16, model.max_input_width()).unwrap();
    Fixture::build(model, codec, &ranks)
}

pub fn random_input(seed: u64, width: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x1b87_3593_cc9e_2d51);
    (0..width).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Integer weights in `[-bound, bound]` with `frac_bits = 0` over `Z_p`.
pub fn integer_fixture(p: u64, dims: &[usize], acts: &[Activation], bound: i64, value_bound: f64, seed: u64) -> Fixture {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .zip(acts)
        .map(|(w, &activation)| {
            let data = (0..w[0] * w[1]).map(|_| rng.random_range(-bound..=bound) as f64).collect();
            Layer { weights: RealMatrix::from_rows(w[1], w[0], data).unwrap(), activation }
        })
        .collect();
    let model = MlpModel::new(layers, bound as f64).unwrap();
    let codec = FixedPointCodec::new(PrimeField::new(p).unwrap(), 0, value_bound, model.max_input_width()).unwrap();
    let ranks: Vec<usize> = dims.windows(2).map(|w| w[0].min(w[1]).min(1)).collect();
    Fixture::build(model, codec, &ranks)
}

fn scenario_strategy(rng: &mut ChaCha20Rng, layers: u32, mode: Mode) -> CheatStrategy {
    if mode != Mode::Malicious || rng.random_bool(0.4) {
        return CheatStrategy::HonestPlay;
    }
    let layer = rng.random_range(1..=layers);
    if rng.random_bool(0.5) {
        CheatStrategy::RandomReply { layer }
    } else {
        CheatStrategy::CoordinateFlip { layer, index: 0, offset: 1 }
    }
}

/// Runs `scenarios` seeded sessions both in process and over TCP loopback and
/// returns how many of them aborted.
pub fn transport_equivalence(scenarios: u64) -> u32 {
    let mut aborts = 0;
    for seed in 0..scenarios {
        let fx = random_fixture(seed, 3, 12);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mode = [Mode::Insecure, Mode::Honest, Mode::Malicious][seed as usize % 3];
        let check_count = rng.random_range(1..=2);
        let strategy = scenario_strategy(&mut rng, fx.decomp.num_layers() as u32, mode);
        let x = random_input(seed, fx.model.dims()[0]);

        let mut masks = precompute_one(&fx.decomp, mode, check_count, seed, 0).unwrap();
        let adversary = CheatingDavid::new(strategy.clone(), rng::substream(seed, rng::ADVERSARY, 0));
        let local = run_session(&fx.decomp, &fx.david, mode, &x, &mut masks, adversary).unwrap();

        let (tx, rx) = mpsc::channel();
        let server = DavidServer::bind("127.0.0.1:0", fx.david.clone())
            .unwrap()
            .with_cheat(strategy, seed)
            .with_sink(tx);
        let addr = server.local_addr().unwrap();
        let handle = server.spawn(Some(1));
        let mut masks = precompute_one(&fx.decomp, mode, check_count, seed, 0).unwrap();
        let (outcome, charlie) = run_remote(addr, &fx.decomp, mode, check_count, &x, &mut masks).unwrap();
        let record = rx.recv().unwrap();
        handle.join().unwrap().unwrap();

        assert_eq!(outcome, local.outcome, "seed {seed}");
        assert_eq!(charlie, local.charlie, "seed {seed}");
        assert_eq!(record.result.unwrap(), local.david, "seed {seed}");
        aborts += outcome.is_abort() as u32;
    }
    aborts
}

fn random_frame(rng: &mut ChaCha20Rng, p: u64) -> Frame {
    let data = |rng: &mut ChaCha20Rng| (0..rng.random_range(0..48)).map(|_| rng.random_range(0..p)).collect();
    let layer = rng.random_range(0..u32::MAX);
    match rng.random_range(0..7) {
        0 => Frame::Message(Message::LayerInput { layer, data: data(rng) }),
        1 => Frame::Message(Message::LayerReply { layer, data: data(rng) }),
        2 => Frame::Message(Message::FinalOutput { data: data(rng) }),
        3 => Frame::Message(Message::Abort { layer }),
        4 => Frame::Hello(SessionHello {
            version: rng.random(),
            mode: [Mode::Insecure, Mode::Honest, Mode::Malicious][rng.random_range(0..3)],
            modulus: p,
            frac_bits: rng.random_range(0..40),
            dims: (0..rng.random_range(2..8)).map(|_| rng.random_range(1..1000)).collect(),
            check_count: rng.random_range(0..4),
        }),
        5 => Frame::Accept(Ok(())),
        _ => Frame::Accept(Err(Refusal::from_code(rng.random_range(1..=6)).unwrap())),
    }
}

/// Encodes and decodes `count` random frames, then re-splits a concatenated sample.
pub fn frame_fuzz(count: usize) {
    let mut rng = ChaCha20Rng::seed_from_u64(0xf2a3e);
    let mut stream = Vec::new();
    let mut expected = Vec::new();
    for i in 0..count {
        let p = if i % 2 == 0 { 101 } else { (1 << 61) - 1 };
        let frame = random_frame(&mut rng, p);
        let bytes = encode_frame(&frame);
        let (decoded, used) = decode_frame(&bytes, Some(p)).unwrap();
        assert_eq!(decoded, frame);
        assert_eq!(used, bytes.len());
        if i % 100 == 0 {
            stream.extend_from_slice(&bytes);
            expected.push(frame);
        }
    }
    assert_eq!(split_frames(&stream, None).unwrap(), expected);
}
