use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracklet_core::nets::{FlatMlpArch, FlatMlpNet, GcnArch, GcnNet, GraphInput, PolicyNet, PolicyOutput};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn same(a: &PolicyOutput<f32>, b: &PolicyOutput<f32>, tol: f64) -> bool {
    a.probs.iter().zip(&b.probs).all(|(&x, &y)| rel(x as f64, y as f64) <= tol) && rel(a.value as f64, b.value as f64) <= tol
}

#[test]
fn gcn_is_invariant_to_neighbour_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let n = rng.gen_range(3..8);
        let net = GcnNet::<f32>::new(GcnArch::standard(40, 5), &mut rng);
        let x = GraphInput::new(n, 40, (0..n * 40).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let base = net.forward(&x).output;
        let mut perm: Vec<usize> = (0..n - 1).collect();
        for _ in 0..20 {
            perm.shuffle(&mut rng);
            assert!(same(&base, &net.forward(&x.permute_neighbors(&perm)).output, 1e-6));
        }
    }
}

#[test]
fn flat_mlp_sees_neighbour_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = FlatMlpNet::<f32>::new(FlatMlpArch::standard(4, 40, 5), &mut rng);
    let x = GraphInput::new(4, 40, (0..160).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let swapped = x.permute_neighbors(&[1, 0, 2]);
    assert!(!same(&net.forward(&x).output, &net.forward(&swapped).output, 1e-6));
}
