use crate::volume::Slice;

/// Closed-form prox of `λ‖u‖²`: `ρ_eff·g / (2λ + ρ_eff)`.
pub fn denoise_tikhonov(g: &Slice, lambda: f64, rho_eff: f64) -> Slice {
    let denom = 2.0 * lambda + rho_eff;
    let out = g.values().iter().map(|&x| rho_eff * x / denom).collect();
    Slice::from_raw(g.width(), g.height(), out)
}
