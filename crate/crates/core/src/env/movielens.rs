//! MovieLens ingestion and the low-rank contextual-bandit reward model.
//!
//! Files use the `::`-delimited MovieLens-1M layout:
//! `ratings.dat` (user::movie::rating::timestamp), `users.dat`
//! (user::gender::age::occupation::zip) and `movies.dat` (movie::title::genres).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::{derive_seed, rng_from_seed};
use crate::{Error, Result};

pub const REWARD_MIN: f64 = 0.0;
pub const REWARD_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub ratings: PathBuf,
    pub users: PathBuf,
    pub movies: PathBuf,
    /// Optional `zip<TAB or comma>place` lookup used in user profiles.
    #[serde(default)]
    pub zip_lookup: Option<PathBuf>,
}

impl DatasetPaths {
    /// The standard file names inside a MovieLens directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let zip = dir.join("zipcodes.tsv");
        Self {
            ratings: dir.join("ratings.dat"),
            users: dir.join("users.dat"),
            movies: dir.join("movies.dat"),
            zip_lookup: zip.exists().then_some(zip),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbConfig {
    pub num_actions: usize,
    pub embed_dim: usize,
    pub seed: u64,
    pub dataset: DatasetPaths,
    /// Fraction of users held out for evaluation.
    pub user_split: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn noun(self) -> &'static str {
        match self {
            Gender::Male => "man",
            Gender::Female => "woman",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: u32,
    pub gender: Gender,
    /// MovieLens age bracket code (1, 18, 25, 35, 45, 50, 56).
    pub age: u32,
    pub occupation: String,
    pub zip: String,
    /// County/state when a lookup table was supplied, otherwise the zip code.
    pub location: String,
}

impl UserProfile {
    pub fn age_text(&self) -> String {
        if self.age == 1 {
            "under-18".to_string()
        } else {
            self.age.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbUser {
    pub profile: UserProfile,
    pub preference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbMovie {
    pub movie_id: u32,
    pub title: String,
    pub genres: String,
    pub rating_count: usize,
    pub embedding: Vec<f64>,
}

impl CbMovie {
    /// `Title (Genre|Genre)` as listed in the scenario preamble.
    pub fn description(&self) -> String {
        format!("{} ({})", self.title, self.genres)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbInstance {
    pub config: CbConfig,
    pub users: Vec<CbUser>,
    pub movies: Vec<CbMovie>,
    /// Top `d` singular values, non-increasing.
    pub sigma: Vec<f64>,
    /// Full singular spectrum of the preference matrix (diagnostics).
    pub spectrum: Vec<f64>,
    /// Row-major N x K user/movie rating matrix, zeros where unrated.
    pub preference_matrix: Vec<f64>,
    pub train_users: Vec<usize>,
    pub eval_users: Vec<usize>,
}

/// Payload of a contextual observation: who the user is and their
/// preference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbContext {
    pub user: usize,
    pub profile: UserProfile,
    pub preference: Vec<f64>,
}

const OCCUPATIONS: [&str; 21] = [
    "other",
    "academic/educator",
    "artist",
    "clerical/admin",
    "college/grad student",
    "customer service",
    "doctor/health care",
    "executive/managerial",
    "farmer",
    "homemaker",
    "K-12 student",
    "lawyer",
    "programmer",
    "retired",
    "sales/marketing",
    "scientist",
    "self-employed",
    "technician/engineer",
    "tradesman/craftsman",
    "unemployed",
    "writer",
];

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    // ML-1M ships movies.dat in latin-1.
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    })
}

fn fields<'a>(path: &Path, line_no: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split("::").collect();
    if parts.len() != n {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("expected {n} '::'-separated fields, found {}", parts.len()),
        });
    }
    Ok(parts)
}

fn parse_num<T: std::str::FromStr>(path: &Path, line_no: usize, what: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Ingest {
        path: path.to_path_buf(),
        line: line_no,
        message: format!("invalid {what} {s:?}"),
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

#[derive(Debug, Clone, Copy)]
pub struct Rating {
    pub user_id: u32,
    pub movie_id: u32,
    pub rating: f64,
}

pub fn read_ratings(path: &Path) -> Result<Vec<Rating>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(no, line)| {
            let f = fields(path, no, line, 4)?;
            Ok(Rating {
                user_id: parse_num(path, no, "user id", f[0])?,
                movie_id: parse_num(path, no, "movie id", f[1])?,
                rating: parse_num(path, no, "rating", f[2])?,
            })
        })
        .collect()
}

pub fn read_users(path: &Path, zip_lookup: &HashMap<String, String>) -> Result<Vec<UserProfile>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(no, line)| {
            let f = fields(path, no, line, 5)?;
            let gender = match f[1].trim() {
                "M" => Gender::Male,
                "F" => Gender::Female,
                other => {
                    return Err(Error::Ingest {
                        path: path.to_path_buf(),
                        line: no,
                        message: format!("unknown gender {other:?}"),
                    })
                }
            };
            let occupation_code: usize = parse_num(path, no, "occupation", f[3])?;
            let occupation = OCCUPATIONS
                .get(occupation_code)
                .ok_or_else(|| Error::Ingest {
                    path: path.to_path_buf(),
                    line: no,
                    message: format!("unknown occupation code {occupation_code}"),
                })?
                .to_string();
            let zip = f[4].trim().to_string();
            let location = zip_lookup
                .get(&zip)
                .or_else(|| zip.get(..5).and_then(|z| zip_lookup.get(z)))
                .cloned()
                .unwrap_or_else(|| zip.clone());
            Ok(UserProfile {
                user_id: parse_num(path, no, "user id", f[0])?,
                gender,
                age: parse_num(path, no, "age", f[2])?,
                occupation,
                zip,
                location,
            })
        })
        .collect()
}

/// `(movie id, display title, genres)` rows.
pub fn read_movies(path: &Path) -> Result<Vec<(u32, String, String)>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(no, line)| {
            let f = fields(path, no, line, 3)?;
            Ok((
                parse_num(path, no, "movie id", f[0])?,
                display_title(f[1].trim()),
                f[2].trim().to_string(),
            ))
        })
        .collect()
}

pub fn read_zip_lookup(path: &Path) -> Result<HashMap<String, String>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(no, line)| {
            let (zip, place) = line
                .split_once(['\t', ','])
                .ok_or_else(|| Error::Ingest {
                    path: path.to_path_buf(),
                    line: no,
                    message: "expected two delimited columns".into(),
                })?;
            Ok((zip.trim().to_string(), place.trim().to_string()))
        })
        .collect()
}

/// Moves a trailing English article back to the front:
/// `Matrix, The (1999)` becomes `The Matrix (1999)`.
pub fn display_title(raw: &str) -> String {
    let (stem, year) = match raw.rfind(" (") {
        Some(idx) if raw.ends_with(')') => (&raw[..idx], &raw[idx..]),
        _ => (raw, ""),
    };
    for article in ["The", "A", "An"] {
        let suffix = format!(", {article}");
        if let Some(base) = stem.strip_suffix(&suffix) {
            return format!("{article} {base}{year}");
        }
    }
    raw.to_string()
}

/// `(U_d, sigma_d, V_d, full_spectrum)`.
pub type Svd = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Rank-`d` truncated SVD of a row-major `rows x cols` matrix. Returns
/// `(U_d, sigma_d, V_d, full_spectrum)` with singular values sorted
/// descending; `U_d` is `rows x d`, `V_d` is `cols x d`, both row-major.
pub fn truncated_svd(
    data: &[f64],
    rows: usize,
    cols: usize,
    d: usize,
) -> Result<Svd> {
    if data.len() != rows * cols {
        return Err(Error::Shape {
            what: "matrix data",
            expected: rows * cols,
            got: data.len(),
        });
    }
    let rank_cap = rows.min(cols);
    if d == 0 || d > rank_cap {
        return Err(Error::Config(format!(
            "embedding dimension {d} must be in 1..={rank_cap}"
        )));
    }
    let m = DMatrix::from_row_slice(rows, cols, data);
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut u_d = vec![0.0; rows * d];
    let mut v_d = vec![0.0; cols * d];
    let mut sigma = Vec::with_capacity(d);
    for (c, &src) in order.iter().take(d).enumerate() {
        sigma.push(s[src]);
        for r in 0..rows {
            u_d[r * d + c] = u[(r, src)];
        }
        for r in 0..cols {
            v_d[r * d + c] = v_t[(src, r)];
        }
    }
    let spectrum = order.iter().map(|&i| s[i]).collect();
    Ok((u_d, sigma, v_d, spectrum))
}

pub fn build_cb_instance(config: CbConfig) -> Result<CbInstance> {
    let paths = &config.dataset;
    let zip_lookup = match &paths.zip_lookup {
        Some(p) => read_zip_lookup(p)?,
        None => HashMap::new(),
    };
    let ratings = read_ratings(&paths.ratings)?;
    let profiles = read_users(&paths.users, &zip_lookup)?;
    let catalog = read_movies(&paths.movies)?;

    let k = config.num_actions;
    let d = config.embed_dim;
    if k == 0 || d == 0 {
        return Err(Error::Config("num_actions and embed_dim must be positive".into()));
    }
    if d > k {
        return Err(Error::Config(format!(
            "embed_dim {d} exceeds num_actions {k}"
        )));
    }
    if !(0.0..=1.0).contains(&config.user_split) {
        return Err(Error::Config(format!(
            "user_split {} outside [0, 1]",
            config.user_split
        )));
    }

    let mut counts: HashMap<u32, usize> = HashMap::new();
    for r in &ratings {
        *counts.entry(r.movie_id).or_default() += 1;
    }
    let mut ranked: Vec<(u32, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    if ranked.len() < k {
        return Err(Error::Config(format!(
            "requested top {k} movies but only {} movies have ratings",
            ranked.len()
        )));
    }
    ranked.truncate(k);

    let catalog: HashMap<u32, (String, String)> =
        catalog.into_iter().map(|(id, t, g)| (id, (t, g))).collect();
    let movie_col: HashMap<u32, usize> = ranked.iter().enumerate().map(|(j, (id, _))| (*id, j)).collect();
    let user_row: HashMap<u32, usize> = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| (p.user_id, i))
        .collect();

    let n = profiles.len();
    if n < d {
        return Err(Error::Config(format!("{n} users cannot support embed_dim {d}")));
    }
    let mut matrix = vec![0.0; n * k];
    for r in &ratings {
        if let Some(&j) = movie_col.get(&r.movie_id) {
            let i = *user_row.get(&r.user_id).ok_or_else(|| {
                Error::Config(format!("rating references unknown user {}", r.user_id))
            })?;
            matrix[i * k + j] = r.rating;
        }
    }

    let (u_d, sigma, v_d, spectrum) = truncated_svd(&matrix, n, k, d)?;

    let movies = ranked
        .iter()
        .enumerate()
        .map(|(j, (id, count))| {
            let (title, genres) = catalog.get(id).cloned().ok_or_else(|| {
                Error::Config(format!("movie {id} is rated but missing from the catalog"))
            })?;
            Ok(CbMovie {
                movie_id: *id,
                title,
                genres,
                rating_count: *count,
                embedding: v_d[j * d..(j + 1) * d].to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let users = profiles
        .into_iter()
        .enumerate()
        .map(|(i, profile)| CbUser {
            profile,
            preference: u_d[i * d..(i + 1) * d].to_vec(),
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(derive_seed(config.seed, "user-split", 0));
    order.shuffle(&mut rng);
    let n_eval = (config.user_split * n as f64).round() as usize;
    let mut eval_users = order[..n_eval].to_vec();
    let mut train_users = order[n_eval..].to_vec();
    eval_users.sort_unstable();
    train_users.sort_unstable();

    Ok(CbInstance {
        config,
        users,
        movies,
        sigma,
        spectrum,
        preference_matrix: matrix,
        train_users,
        eval_users,
    })
}

impl CbInstance {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_movies(&self) -> usize {
        self.movies.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.sigma.len()
    }

    /// Unclamped `u_user^T Sigma v_movie`.
    pub fn raw_reward(&self, user: usize, movie: usize) -> Result<f64> {
        Error::check_index("user", user, self.num_users())?;
        Error::check_index("movie", movie, self.num_movies())?;
        let u = &self.users[user].preference;
        let v = &self.movies[movie].embedding;
        Ok(u.iter()
            .zip(&self.sigma)
            .zip(v)
            .map(|((a, s), b)| a * s * b)
            .sum())
    }

    pub fn cb_reward(&self, user: usize, movie: usize) -> Result<f64> {
        Ok(self.raw_reward(user, movie)?.clamp(REWARD_MIN, REWARD_MAX))
    }

    pub fn split_users(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train_users,
            Split::Eval => &self.eval_users,
        }
    }

    pub fn context(&self, user: usize) -> Result<CbContext> {
        Error::check_index("user", user, self.num_users())?;
        let u = &self.users[user];
        Ok(CbContext {
            user,
            profile: u.profile.clone(),
            preference: u.preference.clone(),
        })
    }

    pub fn sample_user<R: Rng + ?Sized>(&self, split: Split, rng: &mut R) -> Result<CbContext> {
        let pool = self.split_users(split);
        if pool.is_empty() {
            return Err(Error::Config(format!("the {split:?} user split is empty")));
        }
        let user = pool[rng.random_range(0..pool.len())];
        self.context(user)
    }

    /// `||P - U Sigma V^T||_F` for the stored rank-d model.
    pub fn reconstruction_error(&self) -> f64 {
        let k = self.num_movies();
        let mut sum = 0.0;
        for i in 0..self.num_users() {
            for j in 0..k {
                let approx = self.raw_reward(i, j).expect("in range");
                let diff = self.preference_matrix[i * k + j] - approx;
                sum += diff * diff;
            }
        }
        sum.sqrt()
    }

    pub fn action_names(&self) -> Vec<String> {
        self.movies.iter().map(|m| m.title.clone()).collect()
    }

    pub fn action_descriptions(&self) -> Vec<String> {
        self.movies.iter().map(CbMovie::description).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    pub(crate) fn write_toy(dir: &Path) -> DatasetPaths {
        let mut r = std::fs::File::create(dir.join("ratings.dat")).unwrap();
        // movie 20 rated by 3 users, movie 30 by 2, movie 10 by 1, movie 40 by 1
        for line in [
            "1::20::5::0",
            "2::20::3::0",
            "3::20::4::0",
            "1::30::2::0",
            "3::30::5::0",
            "2::10::1::0",
            "3::40::4::0",
        ] {
            writeln!(r, "{line}").unwrap();
        }
        std::fs::write(
            dir.join("users.dat"),
            "1::M::18::4::72401\n2::F::25::14::94591\n3::M::56::11::40201\n",
        )
        .unwrap();
        std::fs::write(
            dir.join("movies.dat"),
            "10::Toy Story (1995)::Animation|Children's|Comedy\n20::Matrix, The (1999)::Action|Sci-Fi|Thriller\n30::American Beauty (1999)::Comedy|Drama\n40::Heat (1995)::Action|Crime|Thriller\n",
        )
        .unwrap();
        DatasetPaths::in_dir(dir)
    }

    #[test]
    fn top_k_by_rating_count() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_toy(dir.path());
        let inst = build_cb_instance(CbConfig {
            num_actions: 2,
            embed_dim: 1,
            seed: 0,
            dataset: paths,
            user_split: 0.0,
        })
        .unwrap();
        let ids: Vec<u32> = inst.movies.iter().map(|m| m.movie_id).collect();
        assert_eq!(ids, vec![20, 30]);
        assert_eq!(inst.movies[0].title, "The Matrix (1999)");
        assert_eq!(inst.users[0].profile.occupation, "college/grad student");
    }

    #[test]
    fn full_rank_reconstructs_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_toy(dir.path());
        let inst = build_cb_instance(CbConfig {
            num_actions: 3,
            embed_dim: 3,
            seed: 0,
            dataset: paths,
            user_split: 0.0,
        })
        .unwrap();
        assert!(inst.reconstruction_error() < 1e-9);
        assert!(inst.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(inst.sigma.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_toy(dir.path());
        std::fs::write(&paths.ratings, "1::20::5::0\n1::20::oops\n").unwrap();
        let err = build_cb_instance(CbConfig {
            num_actions: 1,
            embed_dim: 1,
            seed: 0,
            dataset: paths,
            user_split: 0.0,
        })
        .unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn k_beyond_catalog_errors() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_toy(dir.path());
        let err = build_cb_instance(CbConfig {
            num_actions: 9,
            embed_dim: 1,
            seed: 0,
            dataset: paths,
            user_split: 0.0,
        });
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let err = build_cb_instance(CbConfig {
            num_actions: 1,
            embed_dim: 1,
            seed: 0,
            dataset: DatasetPaths::in_dir(dir.path()),
            user_split: 0.0,
        });
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn zip_lookup_replaces_code() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = write_toy(dir.path());
        let zip = dir.path().join("zip.tsv");
        std::fs::write(&zip, "72401\tCraighead county, AR\n").unwrap();
        paths.zip_lookup = Some(zip);
        let inst = build_cb_instance(CbConfig {
            num_actions: 2,
            embed_dim: 1,
            seed: 0,
            dataset: paths,
            user_split: 0.0,
        })
        .unwrap();
        assert_eq!(inst.users[0].profile.location, "Craighead county, AR");
        assert_eq!(inst.users[1].profile.location, "94591");
    }

    #[test]
    fn titles_move_articles() {
        assert_eq!(display_title("Matrix, The (1999)"), "The Matrix (1999)");
        assert_eq!(display_title("Few Good Men, A (1992)"), "A Few Good Men (1992)");
        assert_eq!(display_title("Heat (1995)"), "Heat (1995)");
    }
}
