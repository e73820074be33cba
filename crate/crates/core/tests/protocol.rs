mod common;

use common::{random_fixture, random_input, Fixture};
use splitinfer_core::codec::FixedPointCodec;
use splitinfer_core::field::PrimeField;
use splitinfer_core::matrix::{FieldMatrix, RealMatrix};
use splitinfer_core::model::{Activation, Layer, MlpModel};
use splitinfer_core::protocol::{
    precompute, precompute_one, run_session, CharlieState, DavidState, Direction, Honest, Message, Mode, Outcome,
    ProtocolError,
};
use splitinfer_core::decompose::DavidPart;

#[test]
fn all_modes_match_the_quantized_oracle() {
    for seed in 0..30u64 {
        let fx = random_fixture(seed);
        let x = random_input(seed, fx.model.dims()[0]);
        let trace = fx.quant.infer_quantized(&x).unwrap();
        for mode in [Mode::Insecure, Mode::Honest, Mode::Malicious] {
            let mut masks = precompute_one(&fx.decomp, mode, 2, seed, 0).unwrap();
            let res = run_session(&fx.decomp, &fx.david, mode, &x, &mut masks, Honest).unwrap();
            assert_eq!(res.outcome, Outcome::Output(trace.output_field().to_vec()), "seed {seed} {mode:?}");
            assert_eq!(res.david.outcome, res.charlie.outcome);
        }
    }
}

#[test]
fn unmasking_recovers_every_oracle_activation() {
    for seed in 100..120u64 {
        let fx = random_fixture(seed);
        let x = random_input(seed, fx.model.dims()[0]);
        let trace = fx.quant.infer_quantized(&x).unwrap();
        let mut masks = precompute_one(&fx.decomp, Mode::Honest, 1, seed, 0).unwrap();
        let mut charlie = CharlieState::new(&fx.decomp, Mode::Honest, &mut masks, &x).unwrap();
        let mut david = DavidState::new(&fx.david).unwrap();
        let mut out = charlie.step(None).unwrap();
        while let Some(msg) = out.take() {
            if let Some(reply) = david.step(msg).unwrap() {
                out = charlie.step(Some(reply)).unwrap();
            }
        }
        assert_eq!(charlie.activations(), trace.activations.as_slice());
    }
}

#[test]
fn insecure_transcript_exposes_activations_and_honest_does_not() {
    let fx = random_fixture(7);
    let x = random_input(7, fx.model.dims()[0]);
    let trace = fx.quant.infer_quantized(&x).unwrap();
    let mut m = precompute_one(&fx.decomp, Mode::Insecure, 0, 7, 0).unwrap();
    let res = run_session(&fx.decomp, &fx.david, Mode::Insecure, &x, &mut m, Honest).unwrap();
    for (layer, data) in res.david.layer_inputs() {
        assert_eq!(data, trace.activations[layer as usize - 1].as_slice());
    }
    let mut m = precompute_one(&fx.decomp, Mode::Honest, 0, 7, 0).unwrap();
    let res = run_session(&fx.decomp, &fx.david, Mode::Honest, &x, &mut m, Honest).unwrap();
    let inputs: Vec<_> = res.david.layer_inputs().collect();
    assert_eq!(inputs[0].1, trace.activations[0].as_slice());
    for (layer, data) in &inputs[1..] {
        assert_ne!(*data, trace.activations[*layer as usize - 1].as_slice());
    }
}

#[test]
fn malicious_mode_with_honest_david_never_aborts() {
    let fx = random_fixture(3);
    let x = random_input(3, fx.model.dims()[0]);
    let expected = fx.quant.infer_quantized(&x).unwrap().activations.pop().unwrap();
    let sets = precompute(&fx.decomp, Mode::Malicious, 1, 10_000, 99).unwrap();
    for mut m in sets {
        let res = run_session(&fx.decomp, &fx.david, Mode::Malicious, &x, &mut m, Honest).unwrap();
        assert_eq!(res.outcome.output(), Some(expected.as_slice()));
    }
}

#[test]
fn reused_mask_set_is_rejected_before_any_message() {
    let fx = random_fixture(11);
    let x = random_input(11, fx.model.dims()[0]);
    let mut masks = precompute_one(&fx.decomp, Mode::Honest, 0, 11, 0).unwrap();
    run_session(&fx.decomp, &fx.david, Mode::Honest, &x, &mut masks, Honest).unwrap();
    assert!(masks.is_consumed());
    let err = CharlieState::new(&fx.decomp, Mode::Honest, &mut masks, &x).unwrap_err();
    assert_eq!(err, ProtocolError::MaskReuse(0));
    let err = run_session(&fx.decomp, &fx.david, Mode::Honest, &x, &mut masks, Honest).unwrap_err();
    assert_eq!(err, ProtocolError::MaskReuse(0));
}

#[test]
fn abort_is_final_and_only_follows_a_failed_check() {
    let fx = random_fixture(21);
    let x = random_input(21, fx.model.dims()[0]);
    let mut masks = precompute_one(&fx.decomp, Mode::Malicious, 1, 21, 0).unwrap();
    let mut charlie = CharlieState::new(&fx.decomp, Mode::Malicious, &mut masks, &x).unwrap();
    let Some(Message::LayerInput { layer: 1, data }) = charlie.step(None).unwrap() else {
        panic!("expected first layer input");
    };
    assert_eq!(data, fx.quant.encode_input(&x).unwrap());
    let field = fx.field();
    let mut reply = fx.david.weights[0].matvec(&field, &data).unwrap();
    reply[0] = field.add(reply[0], 1);
    let msg = charlie.step(Some(Message::LayerReply { layer: 1, data: reply })).unwrap();
    assert_eq!(msg, Some(Message::Abort { layer: 1 }));
    assert_eq!(charlie.outcome(), Some(&Outcome::Abort));
    assert!(charlie.is_finished());
    assert!(matches!(
        charlie.step(Some(Message::LayerReply { layer: 1, data: vec![] })),
        Err(ProtocolError::Phase { .. })
    ));
    let t = charlie.transcript();
    assert_eq!(t.entries.last().unwrap(), &(Direction::CharlieToDavid, Message::Abort { layer: 1 }));
    assert_eq!(t.entries.iter().filter(|(_, m)| matches!(m, Message::Abort { .. })).count(), 1);
}

fn part(field: &PrimeField, w: FieldMatrix) -> DavidPart {
    DavidPart {
        modulus: field.modulus(),
        frac_bits: 0,
        dims: vec![w.cols(), w.rows()],
        weights: vec![w],
    }
}

#[test]
fn david_replies_with_residual_products() {
    let f = PrimeField::new(101).unwrap();
    let v = vec![5, 17, 100];
    let p = part(&f, FieldMatrix::identity(3));
    let mut d = DavidState::new(&p).unwrap();
    assert_eq!(
        d.step(Message::LayerInput { layer: 1, data: v.clone() }).unwrap(),
        Some(Message::LayerReply { layer: 1, data: v })
    );
    let p = part(&f, FieldMatrix::zeros(2, 3));
    let mut d = DavidState::new(&p).unwrap();
    assert_eq!(
        d.step(Message::LayerInput { layer: 1, data: vec![1, 2, 3] }).unwrap(),
        Some(Message::LayerReply { layer: 1, data: vec![0, 0] })
    );
}

#[test]
fn david_rejects_bad_inputs() {
    let f = PrimeField::new(101).unwrap();
    let p = part(&f, FieldMatrix::identity(2));
    let mut d = DavidState::new(&p).unwrap();
    assert!(matches!(
        d.step(Message::LayerInput { layer: 2, data: vec![1, 2] }),
        Err(ProtocolError::LayerOrder { .. })
    ));
    assert!(matches!(
        d.step(Message::LayerInput { layer: 1, data: vec![1] }),
        Err(ProtocolError::Dimension { .. })
    ));
    assert!(d.step(Message::LayerInput { layer: 1, data: vec![1, 101] }).is_err());
}

#[test]
fn zero_weight_model_gives_zero_output() {
    let layers = vec![
        Layer { weights: RealMatrix::zeros(3, 4), activation: Activation::Relu },
        Layer { weights: RealMatrix::zeros(2, 3), activation: Activation::Identity },
    ];
    let model = MlpModel::new(layers, 1.0).unwrap();
    let codec = FixedPointCodec::auto_bound(PrimeField::mersenne61(), 16, 4).unwrap();
    let fx = Fixture::build(model, codec, &[0, 0]);
    let mut m = precompute_one(&fx.decomp, Mode::Malicious, 2, 0, 0).unwrap();
    let res = run_session(&fx.decomp, &fx.david, Mode::Malicious, &[0.5, -1.0, 2.0, 3.0], &mut m, Honest).unwrap();
    assert_eq!(res.outcome, Outcome::Output(vec![0, 0]));
}
