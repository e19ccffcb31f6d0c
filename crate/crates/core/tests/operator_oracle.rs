//! Cross-checks the optimized register operations against an
//! independent dense-matrix implementation built from explicit Kronecker
//! products. The two routes share nothing but the basis convention.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repeater_core::quantum::{entangled_pair_state, single_bright_projection, PureState};

type C = Complex64;
type Mat = Vec<Vec<C>>;

fn eye(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { C::ONE } else { C::ZERO }).collect())
        .collect()
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![C::ZERO; ca * cb]; ra * rb];
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn mat_add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

fn mat_vec(m: &Mat, v: &[C]) -> Vec<C> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Operator acting as `block` on `qubit` (qubit 0 most significant) and
/// identity elsewhere.
fn on_qubit(num_qubits: usize, qubit: usize, block: &Mat) -> Mat {
    let mut m = eye(1);
    for q in 0..num_qubits {
        let factor = if q == qubit { block.clone() } else { eye(2) };
        m = kron(&m, &factor);
    }
    m
}

fn proj_g() -> Mat {
    vec![vec![C::ONE, C::ZERO], vec![C::ZERO, C::ZERO]]
}

fn proj_s() -> Mat {
    vec![vec![C::ZERO, C::ZERO], vec![C::ZERO, C::ONE]]
}

/// Dense heralding operator |g⟩⟨g|_a|s⟩⟨s|_b + e^{iφ}|s⟩⟨s|_a|g⟩⟨g|_b.
fn herald_matrix(num_qubits: usize, a: usize, b: usize, phase: f64) -> Mat {
    let term1 = mat_mul(&on_qubit(num_qubits, a, &proj_g()), &on_qubit(num_qubits, b, &proj_s()));
    let mut term2 =
        mat_mul(&on_qubit(num_qubits, a, &proj_s()), &on_qubit(num_qubits, b, &proj_g()));
    let ph = C::from_polar(1.0, phase);
    for row in &mut term2 {
        for x in row {
            *x *= ph;
        }
    }
    mat_add(&term1, &term2)
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = vec![vec![C::ZERO; b[0].len()]; n];
    for i in 0..n {
        for k in 0..b.len() {
            let aik = a[i][k];
            for j in 0..b[0].len() {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn random_state(num_qubits: usize, rng: &mut ChaCha8Rng) -> PureState {
    let amps: Vec<C> = (0..1usize << num_qubits)
        .map(|_| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    PureState::new(num_qubits, amps).unwrap()
}

/// Relabel by brute force: drop the listed (projected, definite) qubits
/// from every surviving basis index.
fn dense_relabel(num_qubits: usize, amps: &[C], dropped: &[usize]) -> Vec<C> {
    let n_out = num_qubits - dropped.len();
    let mut out = vec![C::ZERO; 1 << n_out];
    for (i, a) in amps.iter().enumerate() {
        if a.norm_sqr() < 1e-28 {
            continue;
        }
        let mut idx = 0usize;
        for q in 0..num_qubits {
            if dropped.contains(&q) {
                continue;
            }
            idx = (idx << 1) | ((i >> (num_qubits - 1 - q)) & 1);
        }
        out[idx] += a;
    }
    out
}

fn normalize(v: &mut [C]) -> f64 {
    let n2: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    let inv = 1.0 / n2.sqrt();
    for a in v {
        *a *= inv;
    }
    n2
}

fn assert_close(got: &[C], want: &[C], tol: f64, label: &str) {
    assert_eq!(got.len(), want.len(), "{label}: dimension");
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).norm() < tol, "{label}: amp {k}: {g} vs {w}");
    }
}

#[test]
fn heralded_projection_matches_dense_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    for trial in 0..100 {
        let n = 2 + (rng.random::<u32>() % 3) as usize;
        let a = (rng.random::<u32>() as usize) % n;
        let mut b = (rng.random::<u32>() as usize) % n;
        while b == a {
            b = (rng.random::<u32>() as usize) % n;
        }
        let phase = (rng.random::<f64>() - 0.5) * 8.0;
        let psi = random_state(n, &mut rng);

        let out = single_bright_projection(&psi, a, b, phase).unwrap();

        let k = herald_matrix(n, a, b, phase);
        let mut dense = mat_vec(&k, psi.amplitudes());
        let prob = dense.iter().map(|x| x.norm_sqr()).sum::<f64>();
        assert!((out.probability - prob).abs() < 1e-9, "trial {trial}: {prob}");
        if prob > 1e-9 {
            normalize(&mut dense);
            assert_close(
                out.state.unwrap().amplitudes(),
                &dense,
                1e-9,
                &format!("projection trial {trial}"),
            );
        }
    }
}

#[test]
fn swap_fusion_matches_dense_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0B);
    for trial in 0..100 {
        let (p1, p2) = ((rng.random::<f64>() - 0.5) * 8.0, (rng.random::<f64>() - 0.5) * 8.0);
        let pair1 = entangled_pair_state(p1);
        let pair2 = entangled_pair_state(p2);

        // Library route.
        let joint = pair1.tensor(&pair2).unwrap();
        let fused = single_bright_projection(&joint, 1, 2, 0.0)
            .unwrap()
            .state
            .unwrap()
            .relabel_s_to_g(&[1, 2])
            .unwrap();

        // Dense route.
        let mut vec4 = vec![C::ZERO; 16];
        for i in 0..4 {
            for j in 0..4 {
                vec4[i * 4 + j] = pair1.amplitudes()[i] * pair2.amplitudes()[j];
            }
        }
        let k = herald_matrix(4, 1, 2, 0.0);
        let heralded = mat_vec(&k, &vec4);
        let mut reduced = dense_relabel(4, &heralded, &[1, 2]);
        normalize(&mut reduced);

        assert_close(fused.amplitudes(), &reduced, 1e-9, &format!("swap trial {trial}"));
        // And the analytic answer: phase addition.
        let overlap = fused.fidelity(&entangled_pair_state(p1 + p2)).unwrap();
        assert!((overlap - 1.0).abs() < 1e-9, "trial {trial}: {overlap}");
    }
}

#[test]
fn teleportation_matches_dense_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCAFE);
    for trial in 0..100 {
        let input = random_state(1, &mut rng);
        let pair_phase = (rng.random::<f64>() - 0.5) * 8.0;
        let pair = entangled_pair_state(pair_phase);

        let joint = input.tensor(&pair).unwrap();
        let out = single_bright_projection(&joint, 0, 1, pair_phase).unwrap();
        assert!((out.probability - 0.5).abs() < 1e-9);
        let delivered = out.state.unwrap().relabel_s_to_g(&[0, 1]).unwrap();

        let k = herald_matrix(3, 0, 1, pair_phase);
        let mut vec3 = vec![C::ZERO; 8];
        for i in 0..2 {
            for j in 0..4 {
                vec3[i * 4 + j] = input.amplitudes()[i] * pair.amplitudes()[j];
            }
        }
        let heralded = mat_vec(&k, &vec3);
        let mut reduced = dense_relabel(3, &heralded, &[0, 1]);
        normalize(&mut reduced);

        assert_close(delivered.amplitudes(), &reduced, 1e-9, &format!("teleport trial {trial}"));
        let fid = delivered.fidelity(&input).unwrap();
        assert!((fid - 1.0).abs() < 1e-9, "trial {trial}: fidelity {fid}");
    }
}

#[test]
fn gates_match_dense_operators() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE);
    for _ in 0..100 {
        let n = 1 + (rng.random::<u32>() % 4) as usize;
        let q = (rng.random::<u32>() as usize) % n;
        let psi = random_state(n, &mut rng);
        let alpha = (rng.random::<f64>() - 0.5) * 8.0;
        let theta = (rng.random::<f64>() - 0.5) * 8.0;

        let phase_block = vec![
            vec![C::ONE, C::ZERO],
            vec![C::ZERO, C::from_polar(1.0, alpha)],
        ];
        let got = psi.apply_phase_gate(q, alpha).unwrap();
        let want = mat_vec(&on_qubit(n, q, &phase_block), psi.amplitudes());
        assert_close(got.amplitudes(), &want, 1e-9, "phase gate");

        let (c2, s2) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let rx_block = vec![
            vec![C::new(c2, 0.0), C::new(0.0, -s2)],
            vec![C::new(0.0, -s2), C::new(c2, 0.0)],
        ];
        let got = psi.apply_rotation_x(q, theta).unwrap();
        let want = mat_vec(&on_qubit(n, q, &rx_block), psi.amplitudes());
        assert_close(got.amplitudes(), &want, 1e-9, "x rotation");
    }
}

/// Chained swaps over 2^m links: the delivered phase is the plain sum of
/// the link phases, for every depth the protocol uses.
#[test]
fn phase_addition_composes_over_all_depths() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFEED);
    for trial in 0..100 {
        let m = 1 + (trial % 6) as u32;
        let links = 1usize << m;
        let phases: Vec<f64> =
            (0..links).map(|_| (rng.random::<f64>() - 0.5) * 8.0).collect();
        let mut acc = entangled_pair_state(phases[0]);
        let mut acc_phase = phases[0];
        for &p in &phases[1..] {
            let joint = acc.tensor(&entangled_pair_state(p)).unwrap();
            acc = single_bright_projection(&joint, 1, 2, 0.0)
                .unwrap()
                .state
                .unwrap()
                .relabel_s_to_g(&[1, 2])
                .unwrap();
            acc_phase += p;
        }
        let overlap = acc.fidelity(&entangled_pair_state(acc_phase)).unwrap();
        assert!((overlap - 1.0).abs() < 1e-9, "m={m} trial {trial}: {overlap}");
    }
}
