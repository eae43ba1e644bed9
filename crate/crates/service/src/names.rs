//! Virtual identities. Every session draws a fresh random subset, so a name
//! says nothing about who sat behind it in another session.

use rand::seq::SliceRandom;
use rand::Rng;

const POOL: &[&str] = &[
    "Abel", "Bea", "Cato", "Dina", "Emil", "Fay", "Gus", "Hana", "Ivo", "Jun", "Kai", "Lia",
    "Milo", "Nora", "Otto", "Pia", "Quin", "Rosa", "Sven", "Tara", "Udo", "Vera", "Wim", "Xena",
    "Yara", "Zeno", "Alba", "Bruno", "Cleo", "Dario", "Elsa", "Fritz", "Greta", "Hugo", "Iris",
    "Jonas", "Klara", "Lenz", "Maren", "Nils", "Olga", "Paul", "Ria", "Sami", "Timo", "Uma",
    "Vito", "Wanda",
];

/// `n` distinct names in random order; numbered fallbacks beyond the pool.
pub fn draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    let mut names: Vec<String> = POOL.iter().map(|s| s.to_string()).collect();
    let mut extra = 1;
    while names.len() < n {
        names.push(format!("Guest{extra}"));
        extra += 1;
    }
    names.shuffle(rng);
    names.truncate(n);
    names
}
