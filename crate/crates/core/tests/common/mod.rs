//! Independent reference implementations and helpers shared by the
//! integration test targets. Nothing here calls into the code under test
//! except to construct inputs.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};

use aquasem::imagecore::ImageBuffer;

/// xorshift64* stream for test inputs, unrelated to the crate's generator.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1)
    }

    pub fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn image(&mut self, w: usize, h: usize, channels: usize) -> ImageBuffer {
        let data = (0..w * h * channels).map(|_| self.below(256) as u8).collect();
        ImageBuffer::new(w, h, channels, data).unwrap()
    }
}

/// Plain double loop over every sample.
pub fn naive_mse(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                let d = f64::from(a.pixel(x, y)[k]) - f64::from(b.pixel(x, y)[k]);
                sum += d * d;
            }
        }
    }
    sum / (w * h * c) as f64
}

pub fn naive_psnr(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let m = naive_mse(a, b);
    if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / m).log10()
    }
}

fn gray_plane(img: &ImageBuffer) -> Vec<Vec<f64>> {
    (0..img.height())
        .map(|y| {
            (0..img.width())
                .map(|x| {
                    let p = img.pixel(x, y);
                    if p.len() == 1 {
                        f64::from(p[0])
                    } else {
                        let l = 299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]);
                        f64::from((l + 500) / 1000)
                    }
                })
                .collect()
        })
        .collect()
}

/// SSIM with an explicit 11x11 Gaussian window (sigma 1.5) slid over every
/// fully contained position, averaged.
pub fn naive_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (ga, gb) = (gray_plane(a), gray_plane(b));
    let (w, h) = (a.width(), a.height());
    let n = 11;
    let g: Vec<f64> = (0..n).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let mut weights = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            weights[i][j] = g[i] * g[j];
            total += weights[i][j];
        }
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut acc = 0.0;
    let mut count = 0.0;
    for y0 in 0..=h - n {
        for x0 in 0..=w - n {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let wt = weights[i][j] / total;
                    let (va, vb) = (ga[y0 + i][x0 + j], gb[y0 + i][x0 + j]);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1.0;
        }
    }
    acc / count
}

/// Spearman rank correlation of `ys` against their index; ties get the
/// average rank.
pub fn spearman_vs_index(ys: &[f64]) -> f64 {
    let n = ys.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && ys[order[j + 1]] == ys[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    pearson(&xs, &ranks)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Sends one HTTP/1.1 request by hand and returns (status, body bytes).
pub fn raw_post(addr: SocketAddr, path: &str, body: &str, auth: Option<&str>) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    let auth_line = auth.map(|a| format!("Authorization: {a}\r\n")).unwrap_or_default();
    write!(
        s,
        "POST {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\n{auth_line}Content-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut r = BufReader::new(s);
    let mut status_line = String::new();
    r.read_line(&mut status_line).unwrap();
    let status = status_line.split_whitespace().nth(1).unwrap().parse().unwrap();
    let mut len = 0;
    loop {
        let mut line = String::new();
        r.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.strip_prefix("Content-Length:") {
            len = v.trim().parse().unwrap();
        }
    }
    let mut buf = vec![0; len];
    r.read_exact(&mut buf).unwrap();
    (status, String::from_utf8(buf).unwrap())
}

/// Axis mapping recovered from a chart's root `data-*` attributes.
#[derive(Debug, Clone, Copy)]
pub struct SvgAxes {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl SvgAxes {
    pub fn invert(&self, px: f64, py: f64) -> (f64, f64) {
        let x = self.x_min + (px - self.left) / self.width * (self.x_max - self.x_min);
        let y = self.y_min + (self.top + self.height - py) / self.height * (self.y_max - self.y_min);
        (x, y)
    }

    /// Pixel height of one data unit.
    pub fn px_per_unit(&self) -> f64 {
        self.height / (self.y_max - self.y_min)
    }
}

fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = tag.find(&key)? + key.len();
    let end = tag[start..].find('"')? + start;
    Some(&tag[start..end])
}

pub fn svg_axes(svg: &str) -> SvgAxes {
    let root = &svg[svg.find("<svg").unwrap()..];
    let root = &root[..root.find('>').unwrap()];
    let f = |n: &str| attr(root, n).unwrap().parse::<f64>().unwrap();
    let plot: Vec<f64> = attr(root, "data-plot")
        .unwrap()
        .split(' ')
        .map(|v| v.parse().unwrap())
        .collect();
    SvgAxes {
        x_min: f("data-x-min"),
        x_max: f("data-x-max"),
        y_min: f("data-y-min"),
        y_max: f("data-y-max"),
        left: plot[0],
        top: plot[1],
        width: plot[2],
        height: plot[3],
    }
}

/// `(data-series, points)` of every `<polyline>`.
pub fn svg_polylines(svg: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    svg.match_indices("<polyline")
        .map(|(i, _)| {
            let tag = &svg[i..i + svg[i..].find('>').unwrap()];
            let series = attr(tag, "data-series").unwrap().to_owned();
            let pts = attr(tag, "points")
                .unwrap()
                .split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect();
            (series, pts)
        })
        .collect()
}
