use rayon::prelude::*;

use super::features::{descriptor_distance, FeatureMap};
use super::CorrespondenceError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match2D {
    pub pixel_a: [usize; 2],
    pub pixel_b: [usize; 2],
    pub distance: f64,
}

impl Match2D {
    pub fn center_a(&self) -> [f64; 2] {
        [self.pixel_a[0] as f64 + 0.5, self.pixel_a[1] as f64 + 0.5]
    }

    pub fn center_b(&self) -> [f64; 2] {
        [self.pixel_b[0] as f64 + 0.5, self.pixel_b[1] as f64 + 0.5]
    }
}

/// Nearest neighbour in `to` for every valid pixel of `from`; ties go to the
/// earliest pixel in row-major order.
fn nearest(from: &FeatureMap, from_px: &[[usize; 2]], to: &FeatureMap, to_px: &[[usize; 2]]) -> Vec<(usize, f64)> {
    from_px
        .par_iter()
        .map(|&[x, y]| {
            let d = from.descriptor(x, y);
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, &[u, v]) in to_px.iter().enumerate() {
                let dist = descriptor_distance(d, to.descriptor(u, v));
                if dist < best.1 {
                    best = (j, dist);
                }
            }
            best
        })
        .collect()
}

/// Mutual nearest neighbours under Euclidean descriptor distance, sorted by
/// ascending distance and truncated to `max_matches`.
pub fn bidirectional_match(
    a: &FeatureMap,
    b: &FeatureMap,
    max_matches: usize,
) -> Result<Vec<Match2D>, CorrespondenceError> {
    if a.channels() != b.channels() {
        return Err(CorrespondenceError::ChannelMismatch(a.channels(), b.channels()));
    }
    let pa = a.valid_pixels();
    let pb = b.valid_pixels();
    if pa.is_empty() || pb.is_empty() {
        return Ok(Vec::new());
    }
    let ab = nearest(a, &pa, b, &pb);
    let ba = nearest(b, &pb, a, &pa);
    let mut out: Vec<(usize, usize, f64)> = ab
        .iter()
        .enumerate()
        .filter(|(i, (j, _))| ba[*j].0 == *i)
        .map(|(i, &(j, d))| (i, j, d))
        .collect();
    out.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)));
    out.truncate(max_matches);
    Ok(out
        .into_iter()
        .map(|(i, j, d)| Match2D { pixel_a: pa[i], pixel_b: pb[j], distance: d })
        .collect())
}
