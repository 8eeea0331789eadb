//! Static score-curve plots: normalized score against frame index, with
//! annotated anomaly spans shaded and the decision threshold drawn.

use image::{Rgb, RgbImage};

const HEIGHT: u32 = 160;
const MARGIN: u32 = 12;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const SHADE: Rgb<u8> = Rgb([255, 205, 205]);
const AXIS: Rgb<u8> = Rgb([90, 90, 90]);
const CURVE: Rgb<u8> = Rgb([20, 60, 170]);
const THRESHOLD: Rgb<u8> = Rgb([200, 120, 0]);

/// Renders `scores` (in `[0, 1]`, one per frame) with per-frame `labels`.
pub fn score_curve(scores: &[f64], labels: &[u8], threshold: f64) -> RgbImage {
    let n = scores.len().max(2);
    let step = (480 / n as u32).clamp(1, 6);
    let plot_w = step * (n as u32 - 1) + 1;
    let plot_h = HEIGHT - 2 * MARGIN;
    let mut img = RgbImage::from_pixel(plot_w + 2 * MARGIN, HEIGHT, WHITE);

    let px = |i: usize| MARGIN + step * i as u32;
    let py = |v: f64| MARGIN + ((1.0 - v.clamp(0.0, 1.0)) * (plot_h - 1) as f64).round() as u32;

    for (i, &l) in labels.iter().enumerate().take(scores.len()) {
        if l == 1 {
            let x0 = px(i).saturating_sub(step / 2).max(MARGIN);
            let x1 = (px(i) + step / 2).min(MARGIN + plot_w - 1);
            for x in x0..=x1 {
                for y in MARGIN..MARGIN + plot_h {
                    img.put_pixel(x, y, SHADE);
                }
            }
        }
    }
    for x in MARGIN..MARGIN + plot_w {
        img.put_pixel(x, MARGIN + plot_h - 1, AXIS);
        if x % 4 < 2 {
            img.put_pixel(x, py(threshold), THRESHOLD);
        }
    }
    for y in MARGIN..MARGIN + plot_h {
        img.put_pixel(MARGIN, y, AXIS);
    }
    for i in 1..scores.len() {
        line(
            &mut img,
            (px(i - 1), py(scores[i - 1])),
            (px(i), py(scores[i])),
            CURVE,
        );
    }
    if scores.len() == 1 {
        img.put_pixel(px(0), py(scores[0]), CURVE);
    }
    img
}

fn line(img: &mut RgbImage, (x0, y0): (u32, u32), (x1, y1): (u32, u32), color: Rgb<u8>) {
    let (x0, y0, x1, y1) = (x0 as i64, y0 as i64, x1 as i64, y1 as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        img.put_pixel(x as u32, y as u32, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}
