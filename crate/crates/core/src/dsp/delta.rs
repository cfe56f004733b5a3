use super::MfccMatrix;

const HALF_WIDTH: isize = 4;

fn delta_once(m: &MfccMatrix) -> MfccMatrix {
    let n = m.n_frames();
    let denom = 2.0 * (1..=HALF_WIDTH).map(|k| (k * k) as f64).sum::<f64>();
    let last = n as isize - 1;
    let mut data = Vec::with_capacity(m.as_slice().len());
    for r in 0..super::MFCC_ROWS {
        let row = m.row(r);
        let at = |i: isize| row[i.clamp(0, last) as usize];
        for t in 0..n as isize {
            let num: f64 = (1..=HALF_WIDTH).map(|k| k as f64 * (at(t + k) - at(t - k))).sum();
            data.push(num / denom);
        }
    }
    MfccMatrix::from_row_major(n, data).expect("same shape as input")
}

/// Regression delta over a 9-frame window with replicated edge frames.
/// Order 2 applies the first-order delta twice.
pub fn delta(m: &MfccMatrix, order: usize) -> MfccMatrix {
    (0..order).fold(m.clone(), |acc, _| delta_once(&acc))
}
