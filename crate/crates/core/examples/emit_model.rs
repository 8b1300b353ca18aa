//! Print the built-in Minifab as TOML.

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    print!("{}", fabrl::model::emit_model(&fabrl::model::build_minifab(seed)));
}
