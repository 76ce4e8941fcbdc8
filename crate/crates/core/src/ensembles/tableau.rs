//! Uniform sampling of n-qubit Clifford unitaries.
//!
//! A uniformly random symplectic matrix is drawn with the randomized form of
//! the Koenig–Smolin canonical-form construction, uniform Pauli signs are
//! attached, and the resulting stabilizer tableau is reduced to the identity
//! with H, S and CNOT. Reversing the reduction yields a gate word for the
//! sampled Clifford.

use rand::Rng;

use super::clifford::Gate;

/// Stabilizer tableau: rows `0..n` are the images of `X_q`, rows `n..2n` of `Z_q`.
/// A row `(x, z, r)` denotes `(−1)^r ⊗_j P_j` with `P = I, X, Z, Y` for
/// `(x_j, z_j) = (0,0), (1,0), (0,1), (1,1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tableau {
    pub n: usize,
    pub x: Vec<Vec<bool>>,
    pub z: Vec<Vec<bool>>,
    pub r: Vec<bool>,
}

impl Tableau {
    pub fn identity(n: usize) -> Self {
        let mut x = vec![vec![false; n]; 2 * n];
        let mut z = vec![vec![false; n]; 2 * n];
        for q in 0..n {
            x[q][q] = true;
            z[n + q][q] = true;
        }
        Self {
            n,
            x,
            z,
            r: vec![false; 2 * n],
        }
    }

    /// Conjugates every row by `gate`.
    pub fn apply(&mut self, gate: Gate) {
        for row in 0..2 * self.n {
            let (x, z) = (&mut self.x[row], &mut self.z[row]);
            match gate {
                Gate::H(a) => {
                    self.r[row] ^= x[a] & z[a];
                    std::mem::swap(&mut x[a], &mut z[a]);
                }
                Gate::S(a) => {
                    self.r[row] ^= x[a] & z[a];
                    z[a] ^= x[a];
                }
                Gate::Cnot(a, b) => {
                    self.r[row] ^= x[a] & z[b] & !(x[b] ^ z[a]);
                    x[b] ^= x[a];
                    z[a] ^= z[b];
                }
            }
        }
    }
}

fn inner(v: &[u8], w: &[u8]) -> u8 {
    let mut t = 0;
    for i in 0..v.len() / 2 {
        t ^= v[2 * i] & w[2 * i + 1];
        t ^= w[2 * i] & v[2 * i + 1];
    }
    t
}

fn transvection(k: &[u8], v: &[u8]) -> Vec<u8> {
    let c = inner(k, v);
    v.iter().zip(k).map(|(a, b)| a ^ (c & b)).collect()
}

fn add(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// Two transvection vectors `h1, h2` with `y = Z_h1 Z_h2 x`.
fn find_transvection(x: &[u8], y: &[u8]) -> [Vec<u8>; 2] {
    let len = x.len();
    let zero = vec![0u8; len];
    if x == y {
        return [zero.clone(), zero];
    }
    if inner(x, y) == 1 {
        return [add(x, y), zero];
    }
    let mut z = vec![0u8; len];
    for i in 0..len / 2 {
        let ii = 2 * i;
        if (x[ii] | x[ii + 1]) != 0 && (y[ii] | y[ii + 1]) != 0 {
            z[ii] = x[ii] ^ y[ii];
            z[ii + 1] = x[ii + 1] ^ y[ii + 1];
            if z[ii] | z[ii + 1] == 0 {
                z[ii + 1] = 1;
                if x[ii] != x[ii + 1] {
                    z[ii] = 1;
                }
            }
            return [add(x, &z), add(y, &z)];
        }
    }
    for i in 0..len / 2 {
        let ii = 2 * i;
        if (x[ii] | x[ii + 1]) != 0 && (y[ii] | y[ii + 1]) == 0 {
            if x[ii] == x[ii + 1] {
                z[ii + 1] = 1;
            } else {
                z[ii + 1] = x[ii];
                z[ii] = x[ii + 1];
            }
            break;
        }
    }
    for i in 0..len / 2 {
        let ii = 2 * i;
        if (x[ii] | x[ii + 1]) == 0 && (y[ii] | y[ii + 1]) != 0 {
            if y[ii] == y[ii + 1] {
                z[ii + 1] = 1;
            } else {
                z[ii + 1] = y[ii];
                z[ii] = y[ii + 1];
            }
            break;
        }
    }
    [add(x, &z), add(y, &z)]
}

/// Uniformly random element of `Sp(2n, F_2)` as `2n` rows in interleaved
/// `(x_0, z_0, x_1, z_1, …)` coordinates; row `2q` is the image of `X_q` and
/// row `2q+1` the image of `Z_q`.
pub fn random_symplectic<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<u8>> {
    let nn = 2 * n;
    let k: u64 = rng.random_range(1..(1u64 << nn));
    let mut f1: Vec<u8> = (0..nn).map(|j| ((k >> j) & 1) as u8).collect();
    let mut e1 = vec![0u8; nn];
    e1[0] = 1;
    let t = find_transvection(&e1, &f1);
    let bits: Vec<u8> = (0..nn - 1).map(|_| rng.random_range(0..2u8)).collect();
    let mut eprime = e1.clone();
    eprime[2..nn].copy_from_slice(&bits[1..nn - 1]);
    let h0 = transvection(&t[1], &transvection(&t[0], &eprime));
    if bits[0] == 1 {
        f1.iter_mut().for_each(|b| *b = 0);
    }
    let mut g = vec![vec![0u8; nn]; nn];
    g[0][0] = 1;
    g[1][1] = 1;
    if n > 1 {
        let sub = random_symplectic(n - 1, rng);
        for (i, row) in sub.iter().enumerate() {
            g[i + 2][2..].copy_from_slice(row);
        }
    }
    for row in g.iter_mut() {
        let mut v = transvection(&t[0], row);
        v = transvection(&t[1], &v);
        v = transvection(&h0, &v);
        v = transvection(&f1, &v);
        *row = v;
    }
    g
}

/// Uniformly random tableau (Clifford modulo phase).
pub fn random_tableau<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Tableau {
    let g = random_symplectic(n, rng);
    let mut tab = Tableau::identity(n);
    for q in 0..n {
        for (row, src) in [(q, 2 * q), (n + q, 2 * q + 1)] {
            for j in 0..n {
                tab.x[row][j] = g[src][2 * j] == 1;
                tab.z[row][j] = g[src][2 * j + 1] == 1;
            }
        }
    }
    for r in tab.r.iter_mut() {
        *r = rng.random_bool(0.5);
    }
    tab
}

/// Gate sequence `G_1, G_2, …` that maps `tab` to the identity tableau.
fn reduce_to_identity(tab: &mut Tableau) -> Vec<Gate> {
    let n = tab.n;
    let mut ops = Vec::new();
    let mut push = |tab: &mut Tableau, g: Gate| {
        tab.apply(g);
        ops.push(g);
    };
    for i in 0..n {
        // Destabilizer row i: make every factor X-type, then collect it on qubit i.
        for j in i..n {
            if tab.z[i][j] {
                let g = if tab.x[i][j] { Gate::S(j) } else { Gate::H(j) };
                push(tab, g);
            }
        }
        if !tab.x[i][i] {
            let j = (i + 1..n)
                .find(|&j| tab.x[i][j])
                .expect("destabilizer has support");
            push(tab, Gate::Cnot(j, i));
        }
        for j in i + 1..n {
            if tab.x[i][j] {
                push(tab, Gate::Cnot(i, j));
            }
        }
        // Stabilizer row n+i: turn Y on qubit i into Z while fixing X there.
        let s = n + i;
        if tab.x[s][i] {
            push(tab, Gate::H(i));
            push(tab, Gate::S(i));
            push(tab, Gate::H(i));
        }
        for j in i + 1..n {
            match (tab.x[s][j], tab.z[s][j]) {
                (true, false) => push(tab, Gate::H(j)),
                (true, true) => {
                    push(tab, Gate::S(j));
                    push(tab, Gate::H(j));
                }
                _ => {}
            }
        }
        for j in i + 1..n {
            if tab.z[s][j] {
                push(tab, Gate::Cnot(j, i));
            }
        }
        // Signs: Z = S² flips X, X = H S² H flips Z.
        if tab.r[i] {
            push(tab, Gate::S(i));
            push(tab, Gate::S(i));
        }
        if tab.r[s] {
            push(tab, Gate::H(i));
            push(tab, Gate::S(i));
            push(tab, Gate::S(i));
            push(tab, Gate::H(i));
        }
    }
    debug_assert_eq!(*tab, Tableau::identity(n));
    ops
}

/// Gate word (in application order) of a Clifford whose conjugation action is `tab`.
pub fn synthesize(tab: &Tableau) -> Vec<Gate> {
    let mut work = tab.clone();
    let ops = reduce_to_identity(&mut work);
    let mut out = Vec::with_capacity(ops.len() * 2);
    for g in ops.into_iter().rev() {
        match g {
            Gate::S(q) => out.extend([Gate::S(q); 3]),
            other => out.push(other),
        }
    }
    out
}

/// Gate word of a uniformly random `n`-qubit Clifford.
pub fn sample_clifford_gates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Gate> {
    synthesize(&random_tableau(n, rng))
}
