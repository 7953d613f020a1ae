//! Seeded integer-sequence puzzles: given five terms, predict the sixth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const PREFIX_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Arithmetic,
    Geometric,
    Quadratic,
    FibonacciLike,
}

pub const FAMILIES: [Family; 4] =
    [Family::Arithmetic, Family::Geometric, Family::Quadratic, Family::FibonacciLike];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceInstance {
    pub family: Family,
    pub prefix: Vec<i64>,
    pub answer: i64,
}

fn terms(family: Family, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let len = PREFIX_LEN + 1;
    match family {
        Family::Arithmetic => {
            let a = rng.random_range(-20..=20i64);
            let mut d = rng.random_range(-9..=9i64);
            if d == 0 {
                d = 3;
            }
            (0..len as i64).map(|k| a + d * k).collect()
        }
        Family::Geometric => {
            let a = rng.random_range(1..=5i64) * if rng.random_bool(0.5) { 1 } else { -1 };
            let ratio = rng.random_range(2..=4i64) * if rng.random_bool(0.25) { -1 } else { 1 };
            (0..len as u32).map(|k| a * ratio.pow(k)).collect()
        }
        Family::Quadratic => {
            let mut a = rng.random_range(-3..=3i64);
            if a == 0 {
                a = 1;
            }
            let b = rng.random_range(-5..=5i64);
            let c = rng.random_range(-10..=10i64);
            (0..len as i64).map(|k| a * k * k + b * k + c).collect()
        }
        Family::FibonacciLike => {
            let mut t = vec![rng.random_range(0..=9i64), rng.random_range(1..=9i64)];
            while t.len() < len {
                let next = t[t.len() - 1] + t[t.len() - 2];
                t.push(next);
            }
            t
        }
    }
}

/// `count` puzzles cycling through the families, parameters drawn from `seed`.
pub fn generate_instances(count: usize, seed: u64) -> Vec<SequenceInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let family = FAMILIES[k % FAMILIES.len()];
            let mut t = terms(family, &mut rng);
            let answer = t.pop().expect("six terms");
            SequenceInstance { family, prefix: t, answer }
        })
        .collect()
}
