/// Up to `k` candidate angles from a circular spectrum: local maxima by
/// descending score, then the best remaining entries if there are fewer than
/// `k` maxima. Ties go to the lower index. Angles assume a uniform grid over
/// 360°.
pub fn top_k_peaks(spectrum: &[f64], k: usize) -> Vec<(f64, f64)> {
    let n = spectrum.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.min(n);
    let step = 360.0 / n as f64;
    let by_score = |a: &usize, b: &usize| spectrum[*b].total_cmp(&spectrum[*a]).then(a.cmp(b));
    let mut maxima: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = spectrum[(i + n - 1) % n];
            let right = spectrum[(i + 1) % n];
            n == 1 || (spectrum[i] > left && spectrum[i] >= right)
        })
        .collect();
    maxima.sort_by(by_score);
    maxima.truncate(k);
    if maxima.len() < k {
        let mut rest: Vec<usize> = (0..n).filter(|i| !maxima.contains(i)).collect();
        rest.sort_by(by_score);
        maxima.extend(rest.into_iter().take(k - maxima.len()));
    }
    maxima
        .into_iter()
        .map(|i| (i as f64 * step, spectrum[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_peak() {
        let mut s = vec![0.0; 72];
        s[10] = 5.0;
        s[9] = 1.0;
        s[11] = 2.0;
        let top = top_k_peaks(&s, 5);
        assert_eq!(top.len(), 5);
        assert_eq!(top[0], (50.0, 5.0));
    }

    #[test]
    fn constant_spectrum_picks_lowest_indices() {
        let top = top_k_peaks(&[1.0; 72], 5);
        let angles: Vec<f64> = top.iter().map(|p| p.0).collect();
        assert_eq!(angles, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
    }

    #[test]
    fn equal_peaks_lower_angle_first() {
        let mut s = vec![0.0; 72];
        s[40] = 3.0;
        s[7] = 3.0;
        let top = top_k_peaks(&s, 5);
        assert_eq!(top[0].0, 35.0);
        assert_eq!(top[1].0, 200.0);
    }

    #[test]
    fn wraparound_maximum() {
        let mut s: Vec<f64> = (0..72).map(|i| i as f64 * 0.01).collect();
        s[0] = 2.0; // neighbours are s[71] = 0.71 and s[1] = 0.01
        let top = top_k_peaks(&s, 2);
        assert_eq!(top[0].0, 0.0);
        assert_eq!(top[1].0, 355.0);
    }
}
