//! Real spherical-harmonics color evaluation, degree 3, with the
//! channel-major coefficient layout of splat PLY files.

const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis scale of the DC band; `0.5 + SH_C0 * dc` is the view-independent
/// color.
pub const SH_DC_SCALE: f64 = SH_C0;

/// Inverse of the DC activation: the coefficient that renders as `color`
/// under degree-0 lighting.
pub fn dc_from_color(color: f64) -> f32 {
    ((color - 0.5) / SH_C0) as f32
}

/// Evaluates the RGB color of a splat for view direction `dir`
/// (normalized, world frame). `sh` is the 48-coefficient block
/// `[dc_rgb, rest_r(15), rest_g(15), rest_b(15)]`; the result is clamped
/// at zero per splat-rendering convention.
pub fn eval_sh_color(sh: &[f32; 48], dir: [f64; 3]) -> [f64; 3] {
    let (x, y, z) = (dir[0], dir[1], dir[2]);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);

    let basis = [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * xy,
        SH_C2[1] * yz,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * xz,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * xy * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ];

    let mut out = [0.0f64; 3];
    for (ch, v) in out.iter_mut().enumerate() {
        let mut acc = basis[0] * sh[ch] as f64;
        for k in 1..16 {
            acc += basis[k] * sh[3 + ch * 15 + (k - 1)] as f64;
        }
        *v = (acc + 0.5).max(0.0);
    }
    out
}
