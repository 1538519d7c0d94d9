use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use tube_rmpc::container::*;
use tube_rmpc::geometry::{facet_enum, vertex_enum, volume, SimplexLp};
use tube_rmpc::model::UncertainSystem;

fn main() {
    let sys = UncertainSystem::from_json_str(include_str!("paper_sec5_system.json")).unwrap();
    let oracle = SimplexLp::default();
    let z0 = default_container(2, 1, (5, 5));
    let img = md_image(&sys.dp_vertices, &z0).unwrap();
    let wm_h = facet_enum(&img).unwrap();
    let pre = container_preimage(&sys.dp_vertices, &wm_h, Some(&sys.z), &oracle).unwrap();

    // Monte Carlo volume of the preimage over a box [-2,2]^3.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let trials = 2_000_000usize;
    let mut hits = 0usize;
    for _ in 0..trials {
        let z = DVector::from_vec(vec![
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        ]);
        if pre.contains_point(&z, 0.0) {
            hits += 1;
        }
    }
    let mc = 64.0 * hits as f64 / trials as f64;
    let exact = volume(&vertex_enum(&pre, &oracle).unwrap()).unwrap();
    println!("preimage volume: hull-based {exact:.4}, monte-carlo {mc:.4}");

    // Monte Carlo area of the image over box [-0.12,0.12]^2 via hull membership.
    let mut hits2 = 0usize;
    let img_h = wm_h.clone();
    for _ in 0..trials {
        let w = DVector::from_vec(vec![rng.gen_range(-0.12..0.12), rng.gen_range(-0.12..0.12)]);
        if img_h.contains_point(&w, 0.0) {
            hits2 += 1;
        }
    }
    let mc2 = 0.24 * 0.24 * hits2 as f64 / trials as f64;
    println!("image area: hull-based {:.6}, monte-carlo {mc2:.6}", volume(&img).unwrap());
}
