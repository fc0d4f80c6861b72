use rand::seq::index::sample;
use rand::Rng;

use crate::env::ActionDomain;
use crate::{Error, Result};

/// Alliterative clothing names. The first twelve appear in the benchmark's
/// published prompt examples.
pub const CLOTHES_POOL: &[&str] = &[
    "Midnight Mirage Trousers",
    "Opulent Oasis Overcoat",
    "Infinite Impeccable Jacket",
    "Supreme Spectrum Slippers",
    "Bejeweled Bloom Blazer",
    "Stellar Sheen Shawl",
    "Faithful Fantasy Frock",
    "Supreme Sylvan Sandals",
    "Bespoke Bliss Blouse",
    "Silk Spectrum Slip",
    "Dapper Dreams Denim",
    "Titanic Tempest Tunic",
    "Velvet Vogue Vest",
    "Radiant Reverie Robe",
    "Crimson Cascade Cardigan",
    "Golden Glimmer Gown",
    "Luminous Lagoon Leggings",
    "Majestic Meadow Mittens",
    "Noble Nebula Necktie",
    "Peerless Prism Poncho",
    "Regal Riviera Raincoat",
    "Serene Solstice Skirt",
    "Tranquil Tide Turtleneck",
    "Urban Utopia Undershirt",
    "Vibrant Valley Visor",
    "Whimsical Willow Windbreaker",
    "Zen Zenith Zip-Up",
    "Amber Aurora Anorak",
    "Blissful Breeze Bomber",
    "Celestial Comet Coat",
    "Dazzling Dune Dress",
    "Elegant Echo Espadrilles",
    "Fabled Forest Fedora",
    "Gallant Glacier Gloves",
    "Harmonious Horizon Hoodie",
    "Ivory Iris Inverness",
    "Jubilant Jade Jumpsuit",
    "Kindred Kismet Kimono",
    "Lavish Lotus Loafers",
    "Mystic Moonlight Moccasins",
    "Nautical Nova Nightgown",
    "Onyx Orchid Oxfords",
    "Pristine Petal Pajamas",
    "Rustic Rainbow Romper",
    "Sapphire Sunset Sweater",
    "Timeless Twilight Trench",
];

/// All one- and two-letter codes: A..Z then AA..ZZ.
pub fn video_codes() -> Vec<String> {
    let letters: Vec<char> = ('A'..='Z').collect();
    let mut codes: Vec<String> = letters.iter().map(|c| c.to_string()).collect();
    for a in &letters {
        for b in &letters {
            codes.push(format!("{a}{b}"));
        }
    }
    codes
}

/// Draws `k` distinct action names for `domain`.
pub fn make_action_names<R: Rng + ?Sized>(domain: ActionDomain, k: usize, rng: &mut R) -> Result<Vec<String>> {
    let pool: Vec<String> = match domain {
        ActionDomain::Videos => video_codes(),
        ActionDomain::Clothes => CLOTHES_POOL.iter().map(|s| s.to_string()).collect(),
    };
    if k > pool.len() {
        return Err(Error::Config(format!(
            "name pool for {domain:?} has {} entries, {k} requested",
            pool.len()
        )));
    }
    Ok(sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use std::collections::HashSet;

    #[test]
    fn pool_contains_published_names() {
        assert!(CLOTHES_POOL.contains(&"Supreme Sylvan Sandals"));
        assert!(CLOTHES_POOL.len() >= 40);
        let unique: HashSet<_> = CLOTHES_POOL.iter().collect();
        assert_eq!(unique.len(), CLOTHES_POOL.len());
    }

    #[test]
    fn twenty_distinct_videos() {
        let names = make_action_names(ActionDomain::Videos, 20, &mut rng_from_seed(1)).unwrap();
        let unique: HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), 20);
        assert!(names.iter().all(|n| (1..=2).contains(&n.len())));
    }

    #[test]
    fn same_seed_same_names() {
        let a = make_action_names(ActionDomain::Clothes, 20, &mut rng_from_seed(4)).unwrap();
        let b = make_action_names(ActionDomain::Clothes, 20, &mut rng_from_seed(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exhausted_pool_errors() {
        let err = make_action_names(ActionDomain::Clothes, CLOTHES_POOL.len() + 1, &mut rng_from_seed(0));
        assert!(err.is_err());
        assert_eq!(video_codes().len(), 26 + 26 * 26);
    }
}
