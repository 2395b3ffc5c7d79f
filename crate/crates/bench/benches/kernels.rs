use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maqc_core::genmodel::{Architecture, ScoreNetwork};
use maqc_core::ising::{prepare_ground_state, prepare_paramagnet, EvolutionConfig, TrotterStepper};
use maqc_core::{MeasurementProtocol, OutcomeBitstring, ProtocolConfig, StateVector};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trotter(c: &mut Criterion) {
    let mut group = c.benchmark_group("trotter_step");
    for n in [10, 14] {
        let stepper = TrotterStepper::new(n, 0.05).unwrap();
        let mut state = StateVector::plus_state(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| stepper.step(&mut state).unwrap()));
    }
    group.finish();
}

fn post_measurement(c: &mut Criterion) {
    let mut group = c.benchmark_group("post_measurement_state");
    group.sample_size(20);
    for n in [10, 14] {
        let evo = EvolutionConfig::new(n);
        let psi_c = prepare_ground_state(&evo).unwrap().state;
        let psi_a = prepare_paramagnet(&evo).unwrap();
        let protocol = MeasurementProtocol::new(psi_c, psi_a, ProtocolConfig::default()).unwrap();
        let outcome = OutcomeBitstring::from_index(n, 0b1011);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| protocol.measure(&outcome).unwrap()));
    }
    group.finish();
}

fn partial_trace(c: &mut Criterion) {
    let evo = EvolutionConfig::new(14);
    let state = prepare_paramagnet(&evo).unwrap();
    c.bench_function("partial_trace_two_sites_n14", |b| b.iter(|| state.partial_trace(&[4, 9]).unwrap()));
}

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = ScoreNetwork::new(3 + 8 + 5, &Architecture::default().hidden, 3, &mut rng).unwrap();
    let x = DMatrix::from_element(16, 256, 0.3);
    let y = DMatrix::from_element(3, 256, 0.1);
    c.bench_function("mlp_forward_batch256", |b| b.iter(|| net.forward(&x)));
    c.bench_function("mlp_loss_and_grad_batch256", |b| b.iter(|| net.loss_and_grad(&x, &y)));
}

criterion_group!(benches, trotter, post_measurement, partial_trace, mlp);
criterion_main!(benches);
