//! Straight transcriptions of the closed-form test functions, written
//! independently of `mrfa::benchfuncs` so the two can be compared.

#![allow(dead_code)]

use std::f64::consts::PI;

pub fn additive10(x: &[f64]) -> f64 {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    f64::sin(1.5 * x1 * PI) + 3.0 * f64::cos(3.5 * x2 * PI) + 5.0 * f64::exp(x3)
        + 2.0 * f64::cos(x2 * PI) * f64::sin(x3 * PI)
}

pub fn borehole(x: &[f64]) -> f64 {
    let rw = x[0];
    let r = x[1];
    let t_u = x[2];
    let h_u = x[3];
    let t_l = x[4];
    let h_l = x[5];
    let l = x[6];
    let k_w = x[7];
    let ln_rrw = f64::ln(r / rw);
    let numerator = 2.0 * PI * t_u * (h_u - h_l);
    let denominator = ln_rrw * (1.0 + (2.0 * l * t_u) / (ln_rrw * rw.powi(2) * k_w) + t_u / t_l);
    numerator / denominator
}

pub fn gramacy_lee(x: &[f64]) -> f64 {
    let inner = (0.9 * (x[0] + 0.48)).powf(10.0);
    f64::exp(f64::sin(inner)) + x[1] * x[2] + x[3]
}

pub fn bending(x: &[f64]) -> f64 {
    let (l, b, h) = (x[0], x[1], x[2]);
    (4.0 / 1e9) * (l * l * l) / (b * h * h * h)
}

pub fn otl(x: &[f64]) -> f64 {
    let r_b1 = x[0];
    let r_b2 = x[1];
    let r_f = x[2];
    let r_c1 = x[3];
    let r_c2 = x[4];
    let big_b = x[5];
    let v_b1 = 12.0 * r_b2 / (r_b1 + r_b2);
    let bb = big_b * (r_c2 + 9.0);
    let term1 = (v_b1 + 0.74) * bb / (bb + r_f);
    let term2 = 11.35 * r_f / (bb + r_f);
    let term3 = 0.74 * r_f * big_b * (r_c2 + 9.0) / ((bb + r_f) * r_c1);
    term1 + term2 + term3
}

/// The sweep angle `x[3]` is given in degrees.
pub fn wing(x: &[f64]) -> f64 {
    let s_w = x[0];
    let w_fw = x[1];
    let a = x[2];
    let lambda = x[3] * PI / 180.0;
    let q = x[4];
    let r = x[5];
    let t_c = x[6];
    let n_z = x[7];
    let w_dg = x[8];
    let w_p = x[9];
    let cos_l = f64::cos(lambda);
    0.036
        * s_w.powf(0.758)
        * w_fw.powf(0.0035)
        * (a / cos_l.powi(2)).powf(0.6)
        * q.powf(0.006)
        * r.powf(0.04)
        * (100.0 * t_c / cos_l).powf(-0.3)
        * (n_z * w_dg).powf(0.49)
        + s_w * w_p
}

pub fn damped_cosine(x: &[f64]) -> f64 {
    f64::exp(-1.4 * x[0]) * f64::cos(3.5 * PI * x[0])
}

pub type Entry = (&'static str, fn(&[f64]) -> f64, Vec<(f64, f64)>);

/// Name, oracle and input box of every function, in original units.
pub fn table() -> Vec<Entry> {
    vec![
        ("additive10", additive10 as fn(&[f64]) -> f64, vec![(0.0, 1.0); 10]),
        (
            "borehole",
            borehole,
            vec![
                (0.05, 0.15),
                (100.0, 50_000.0),
                (63_070.0, 115_600.0),
                (990.0, 1110.0),
                (63.1, 116.0),
                (700.0, 820.0),
                (1120.0, 1680.0),
                (9855.0, 12_045.0),
            ],
        ),
        ("gramacy_lee", gramacy_lee, vec![(0.0, 1.0); 6]),
        ("bending", bending, vec![(10.0, 20.0), (1.0, 2.0), (0.1, 0.2)]),
        (
            "otl",
            otl,
            vec![(50.0, 150.0), (25.0, 70.0), (0.5, 3.0), (1.2, 2.5), (0.25, 1.2), (50.0, 300.0)],
        ),
        (
            "wing",
            wing,
            vec![
                (150.0, 200.0),
                (220.0, 300.0),
                (6.0, 10.0),
                (-10.0, 10.0),
                (16.0, 45.0),
                (0.5, 1.0),
                (0.08, 0.18),
                (2.5, 6.0),
                (1700.0, 2500.0),
                (0.025, 0.08),
            ],
        ),
        ("damped_cosine", damped_cosine, vec![(0.0, 1.0)]),
    ]
}
