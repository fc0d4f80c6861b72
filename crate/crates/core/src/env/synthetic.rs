//! Writes small MovieLens-format corpora for tests, demos and benchmarks.
//! The layout matches the real `ml-1m` files so the same ingestion path runs.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::movielens::DatasetPaths;
use crate::seed::{derive_seed, rng_from_seed};
use crate::{Error, Result};

const AGES: [u32; 7] = [1, 18, 25, 35, 45, 50, 56];
const GENRES: [&str; 8] = [
    "Action", "Comedy", "Drama", "Sci-Fi", "Thriller", "Romance", "Horror", "War",
];

/// Writes `ratings.dat`, `users.dat` and `movies.dat` into `dir`.
/// Movie popularity decays with the movie id so top-K selection is well
/// defined; ratings follow a noisy rank-3 latent model.
pub fn write_corpus(dir: &Path, num_users: usize, num_movies: usize, seed: u64) -> Result<DatasetPaths> {
    let mut rng = rng_from_seed(derive_seed(seed, "synthetic-movielens", 0));
    let latent = 3;
    let gauss = |rng: &mut crate::seed::BenchRng| -> f64 { StandardNormal.sample(rng) };

    let user_f: Vec<Vec<f64>> = (0..num_users)
        .map(|_| (0..latent).map(|_| gauss(&mut rng)).collect())
        .collect();
    let movie_f: Vec<Vec<f64>> = (0..num_movies)
        .map(|_| (0..latent).map(|_| gauss(&mut rng)).collect())
        .collect();

    let mut users = String::new();
    for u in 0..num_users {
        let gender = if rng.random_bool(0.5) { "M" } else { "F" };
        let age = AGES[rng.random_range(0..AGES.len())];
        let occupation = rng.random_range(0..21);
        let zip = 10000 + rng.random_range(0..89999);
        writeln!(users, "{}::{gender}::{age}::{occupation}::{zip}", u + 1).unwrap();
    }

    let mut movies = String::new();
    for m in 0..num_movies {
        let year = 1970 + (m * 7) % 30;
        let g1 = GENRES[m % GENRES.len()];
        let g2 = GENRES[(m / 2 + 3) % GENRES.len()];
        let genres = if g1 == g2 { g1.to_string() } else { format!("{g1}|{g2}") };
        writeln!(movies, "{}::Synthetic Feature {:03} ({year})::{genres}", m + 1, m + 1).unwrap();
    }

    let mut ratings = String::new();
    for (u, uf) in user_f.iter().enumerate() {
        for (m, mf) in movie_f.iter().enumerate() {
            let p_rate = 0.9 / (1.0 + m as f64 * 0.15);
            if rng.random::<f64>() >= p_rate {
                continue;
            }
            let affinity: f64 = uf.iter().zip(mf).map(|(a, b)| a * b).sum();
            let score = (3.0 + affinity + 0.5 * gauss(&mut rng)).round().clamp(1.0, 5.0);
            writeln!(ratings, "{}::{}::{}::{}", u + 1, m + 1, score as u8, 978300760 + m).unwrap();
        }
    }

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths {
        ratings: dir.join("ratings.dat"),
        users: dir.join("users.dat"),
        movies: dir.join("movies.dat"),
        zip_lookup: None,
    };
    for (path, body) in [
        (&paths.ratings, ratings),
        (&paths.users, users),
        (&paths.movies, movies),
    ] {
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(paths)
}
