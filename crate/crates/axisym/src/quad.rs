//! Gauss-Legendre quadrature rules on `[-1, 1]`.

/// Six-point rule as `(node, weight)` pairs.
pub const GL6: [(f64, f64); 6] = [
    (-0.932_469_514_203_152_f64, 0.171_324_492_379_170_f64),
    (-0.661_209_386_466_264_5, 0.360_761_573_048_138_6),
    (-0.238_619_186_083_196_9, 0.467_913_934_572_691),
    (0.238_619_186_083_196_9, 0.467_913_934_572_691),
    (0.661_209_386_466_264_5, 0.360_761_573_048_138_6),
    (0.932_469_514_203_152, 0.171_324_492_379_170),
];

/// Integrates `f` over `[a, b]` with the six-point rule.
pub fn gl6(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    GL6.iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
}
