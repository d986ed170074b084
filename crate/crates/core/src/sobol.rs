//! Sobol low-discrepancy points (up to 8 dimensions), used to seed multi-start solves.

const BITS: usize = 32;

// (degree s, coefficient a, initial m_1..m_s) for dimensions 2..=8
const PRIMITIVES: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

pub const MAX_DIM: usize = 8;

pub struct Sobol {
    dirs: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u32,
}

impl Sobol {
    pub fn new(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "sobol dimension must be 1..=8");
        let mut dirs = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (i, v) in first.iter_mut().enumerate() {
            *v = 1u32 << (BITS - 1 - i);
        }
        dirs.push(first);
        for &(s, a, m) in PRIMITIVES.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for i in 0..s.min(BITS) {
                v[i] = m[i] << (BITS - 1 - i);
            }
            for i in s..BITS {
                let mut x = v[i - s] ^ (v[i - s] >> s);
                for k in 1..s {
                    if (a >> (s - 1 - k)) & 1 == 1 {
                        x ^= v[i - k];
                    }
                }
                v[i] = x;
            }
            dirs.push(v);
        }
        Sobol {
            state: vec![0; dim],
            dirs,
            index: 0,
        }
    }

    /// Next point in [0,1)^d, starting with the origin.
    pub fn next_point(&mut self) -> Vec<f64> {
        let out: Vec<f64> = self
            .state
            .iter()
            .map(|&s| s as f64 / (1u64 << BITS) as f64)
            .collect();
        let c = self.index.trailing_ones() as usize;
        for (s, d) in self.state.iter_mut().zip(&self.dirs) {
            *s ^= d[c];
        }
        self.index += 1;
        out
    }
}

/// First `n` Sobol points mapped into the box.
pub fn sobol_in_box(bounds: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    let mut s = Sobol::new(bounds.len());
    (0..n)
        .map(|_| {
            s.next_point()
                .iter()
                .zip(bounds)
                .map(|(u, (a, b))| a + u * (b - a))
                .collect()
        })
        .collect()
}
