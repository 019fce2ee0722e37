use inflow_core::data::{gen_gaussian_mixture, DataBatch};
use inflow_core::flow::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, train, CheckpointError, FlowConfig,
    FlowModel, Gate, Init, SubnetSpec, TrainConfig,
};
use inflow_core::numerics::AdamConfig;
use inflow_core::rng::seeded;
use inflow_core::{Error, Exec};

fn blobs(n: usize, seed: u64) -> DataBatch {
    gen_gaussian_mixture(n, &[vec![0.05, 0.15], vec![0.15, 0.05]], 0.01, &mut seeded(seed)).unwrap()
}

fn small(epochs: usize, steps: usize, batch: usize, seed: u64) -> TrainConfig {
    TrainConfig { epochs, steps_per_epoch: steps, batch_size: batch, seed, ..TrainConfig::desk() }
}

#[test]
fn zero_epochs_leave_model_untouched() {
    let mut m = FlowModel::new(FlowConfig::vector(2, 2, [16])).unwrap();
    let before = m.clone();
    let report = train(&mut m, &blobs(100, 0), &small(0, 50, 32, 0)).unwrap();
    assert!(report.losses.is_empty());
    assert_eq!(m, before);
}

#[test]
fn loss_falls_on_a_fixed_batch() {
    let data = blobs(128, 1);
    let mut m = FlowModel::new(FlowConfig::vector(2, 2, [32, 32])).unwrap();
    let report = train(&mut m, &data, &small(1, 50, 128, 0)).unwrap();
    assert_eq!(report.losses.len(), 50);
    assert!(report.losses[49] < report.losses[0], "{:?}", report.losses);
    assert_eq!((m.meta.epochs, m.meta.steps), (1, 50));
}

#[test]
fn training_is_deterministic_across_exec_modes() {
    let data = blobs(300, 2);
    let run = |exec| {
        let mut m = FlowModel::new(FlowConfig::vector(2, 2, [16])).unwrap();
        let cfg = TrainConfig { exec, ..small(2, 10, 100, 9) };
        let r = train(&mut m, &data, &cfg).unwrap();
        (r.losses, encode_checkpoint(&m))
    };
    let a = run(Exec::Parallel);
    assert_eq!(a, run(Exec::Parallel));
    assert_eq!(a, run(Exec::Sequential));
}

#[test]
fn desk_run_reduces_nll_by_ten_percent() {
    let data = blobs(5000, 3);
    let mut m = FlowModel::new(FlowConfig::vector(2, 2, [64, 64])).unwrap();
    let initial = m.nll(&data).unwrap();
    train(&mut m, &data, &TrainConfig::desk()).unwrap();
    let fin = m.nll(&data).unwrap();
    assert!(initial > 0.0);
    assert!(fin < 0.9 * initial, "{initial} -> {fin}");
}

#[test]
fn divergence_is_reported_with_step() {
    let data = blobs(64, 4);
    let mut m = FlowModel::new(FlowConfig::vector(2, 2, [8])).unwrap();
    let cfg = TrainConfig { adam: AdamConfig { lr: 1e6, ..AdamConfig::default() }, ..small(1, 50, 64, 0) };
    match train(&mut m, &data, &cfg) {
        Err(Error::Diverged { step, .. }) => assert!(step > 0 && step < 50),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn mismatched_data_is_rejected() {
    let mut m = FlowModel::new(FlowConfig::vector(3, 2, [8])).unwrap();
    assert!(matches!(train(&mut m, &blobs(10, 0), &small(1, 1, 4, 0)), Err(Error::Dimension(_))));
}

fn trained_image_model() -> FlowModel {
    FlowModel::new(FlowConfig {
        blocks: 3,
        input_shape: vec![3, 4, 4],
        subnet: SubnetSpec::conv([4]),
        shared: true,
        perm_seed: 5,
        init: Init::Random,
        init_seed: 6,
    })
    .unwrap()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut vector = FlowModel::new(FlowConfig::vector(2, 2, [16])).unwrap();
    let data = blobs(200, 5);
    train(&mut vector, &data, &small(1, 5, 50, 3)).unwrap();
    for m in [vector, trained_image_model()] {
        let bytes = encode_checkpoint(&m);
        let back = decode_checkpoint(&bytes).unwrap();
        // The init scheme is not persisted; everything it produced is.
        assert_eq!(back.params(), m.params());
        assert_eq!(back.permutations(), m.permutations());
        assert_eq!(back.meta, m.meta);
        assert_eq!(encode_checkpoint(&back), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&m, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let batch = if m.config().input_shape == [2] {
            data.clone()
        } else {
            inflow_core::data::gen_noise(10, &[3, 4, 4], &mut seeded(1)).unwrap()
        };
        let a = m.log_likelihood(&batch, Gate::One, Exec::Parallel).unwrap();
        let b = loaded.log_likelihood(&batch, Gate::One, Exec::Sequential).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn corrupt_checkpoints_give_typed_errors() {
    let bytes = encode_checkpoint(&trained_image_model());
    for cut in [0, 3, 4, 7, 8, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_))), "cut at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint(&bad), Err(Error::Checkpoint(CheckpointError::BadMagic(_)))));
    let mut future = bytes.clone();
    future[4] = 99;
    assert!(matches!(decode_checkpoint(&future), Err(Error::Checkpoint(CheckpointError::Version { found: 99 }))));
    let mut long = bytes;
    long.push(0);
    assert!(matches!(decode_checkpoint(&long), Err(Error::Checkpoint(CheckpointError::Trailing(1)))));
}

#[test]
fn missing_checkpoint_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_checkpoint(&dir.path().join("nope")), Err(Error::Io { .. })));
}
