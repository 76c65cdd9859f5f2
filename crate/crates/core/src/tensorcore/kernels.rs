//! Per-sample direct convolution, pooling and linear kernels.

/// Geometry of a windowed layer on one sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
}

/// Output positions `o` along one axis whose input `o*stride + k - pad` is inside
/// `[0, size)`.
fn valid(out: usize, size: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    if size + pad <= k {
        return (0, 0);
    }
    let hi = ((size - 1 + pad - k) / stride + 1).min(out);
    (lo.min(hi), hi)
}

/// Row segments touched by kernel offset `(ky, kx)`.
#[derive(Clone, Copy)]
struct Tap {
    oy: (usize, usize),
    ox: (usize, usize),
}

impl Window {
    fn tap(&self, ky: usize, kx: usize) -> Option<Tap> {
        let oy = valid(self.oh, self.h, ky, self.sh, self.ph);
        let ox = valid(self.ow, self.w, kx, self.sw, self.pw);
        (oy.0 < oy.1 && ox.0 < ox.1).then_some(Tap { oy, ox })
    }

    fn in_row(&self, oy: usize, ky: usize) -> usize {
        (oy * self.sh + ky - self.ph) * self.w
    }

    fn in_col(&self, ox: usize, kx: usize) -> usize {
        ox * self.sw + kx - self.pw
    }

    pub fn in_plane(&self) -> usize {
        self.h * self.w
    }

    pub fn out_plane(&self) -> usize {
        self.oh * self.ow
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Input channel range feeding output channel `oc`.
fn in_channels(oc: usize, cin: usize, depthwise: bool) -> core::ops::Range<usize> {
    if depthwise {
        oc..oc + 1
    } else {
        0..cin
    }
}

fn weight_base(win: &Window, oc: usize, ic: usize, cin: usize, depthwise: bool) -> usize {
    let per = win.kh * win.kw;
    if depthwise {
        oc * per
    } else {
        (oc * cin + ic) * per
    }
}

pub(crate) fn conv_forward(
    win: &Window,
    cin: usize,
    cout: usize,
    depthwise: bool,
    x: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    y: &mut [f64],
) {
    let (ip, op) = (win.in_plane(), win.out_plane());
    for oc in 0..cout {
        let yplane = &mut y[oc * op..(oc + 1) * op];
        yplane.fill(bias.map_or(0.0, |b| b[oc]));
        for ic in in_channels(oc, cin, depthwise) {
            let xplane = &x[ic * ip..(ic + 1) * ip];
            let wb = weight_base(win, oc, ic, cin, depthwise);
            for ky in 0..win.kh {
                for kx in 0..win.kw {
                    let Some(t) = win.tap(ky, kx) else { continue };
                    let wv = weight[wb + ky * win.kw + kx];
                    let len = t.ox.1 - t.ox.0;
                    for oy in t.oy.0..t.oy.1 {
                        let yrow = &mut yplane[oy * win.ow + t.ox.0..oy * win.ow + t.ox.1];
                        let xs = win.in_row(oy, ky) + win.in_col(t.ox.0, kx);
                        if win.sw == 1 {
                            axpy(yrow, wv, &xplane[xs..xs + len]);
                        } else {
                            for (j, yv) in yrow.iter_mut().enumerate() {
                                *yv += wv * xplane[xs + j * win.sw];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates input gradients into `gx` and weight/bias gradients into `gw`/`gb`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    win: &Window,
    cin: usize,
    cout: usize,
    depthwise: bool,
    x: &[f64],
    weight: &[f64],
    gy: &[f64],
    gx: Option<&mut [f64]>,
    gw: &mut [f64],
    gb: Option<&mut [f64]>,
) {
    let (ip, op) = (win.in_plane(), win.out_plane());
    if let Some(gb) = gb {
        for oc in 0..cout {
            gb[oc] += gy[oc * op..(oc + 1) * op].iter().sum::<f64>();
        }
    }
    let mut gx = gx;
    for oc in 0..cout {
        let gplane = &gy[oc * op..(oc + 1) * op];
        for ic in in_channels(oc, cin, depthwise) {
            let xplane = &x[ic * ip..(ic + 1) * ip];
            let wb = weight_base(win, oc, ic, cin, depthwise);
            for ky in 0..win.kh {
                for kx in 0..win.kw {
                    let Some(t) = win.tap(ky, kx) else { continue };
                    let wi = wb + ky * win.kw + kx;
                    let wv = weight[wi];
                    let len = t.ox.1 - t.ox.0;
                    let mut acc = 0.0;
                    for oy in t.oy.0..t.oy.1 {
                        let grow = &gplane[oy * win.ow + t.ox.0..oy * win.ow + t.ox.1];
                        let xs = win.in_row(oy, ky) + win.in_col(t.ox.0, kx);
                        if win.sw == 1 {
                            acc += dot(grow, &xplane[xs..xs + len]);
                            if let Some(gx) = gx.as_deref_mut() {
                                axpy(&mut gx[ic * ip + xs..ic * ip + xs + len], wv, grow);
                            }
                        } else {
                            for (j, g) in grow.iter().enumerate() {
                                acc += g * xplane[xs + j * win.sw];
                            }
                            if let Some(gx) = gx.as_deref_mut() {
                                let gplane_x = &mut gx[ic * ip..(ic + 1) * ip];
                                for (j, g) in grow.iter().enumerate() {
                                    gplane_x[xs + j * win.sw] += wv * g;
                                }
                            }
                        }
                    }
                    gw[wi] += acc;
                }
            }
        }
    }
}

/// Max pooling over valid window positions; returns the flat input index of each
/// output's maximum (first in scan order on ties).
pub(crate) fn max_pool_forward(
    win: &Window,
    channels: usize,
    x: &[f64],
    y: &mut [f64],
    argmax: &mut [usize],
) {
    let (ip, op) = (win.in_plane(), win.out_plane());
    for c in 0..channels {
        for oy in 0..win.oh {
            for ox in 0..win.ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for ky in 0..win.kh {
                    let iy = (oy * win.sh + ky) as isize - win.ph as isize;
                    if iy < 0 || iy >= win.h as isize {
                        continue;
                    }
                    for kx in 0..win.kw {
                        let ix = (ox * win.sw + kx) as isize - win.pw as isize;
                        if ix < 0 || ix >= win.w as isize {
                            continue;
                        }
                        let i = c * ip + iy as usize * win.w + ix as usize;
                        if x[i] > best || best_i == usize::MAX {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                let o = c * op + oy * win.ow + ox;
                y[o] = best;
                argmax[o] = best_i;
            }
        }
    }
}

/// `y = W x + b` for one sample.
pub(crate) fn linear_forward(
    cin: usize,
    cout: usize,
    x: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    y: &mut [f64],
) {
    for o in 0..cout {
        let b = bias.map_or(0.0, |b| b[o]);
        y[o] = b + dot(&weight[o * cin..(o + 1) * cin], x);
    }
}

pub(crate) fn linear_backward(
    cin: usize,
    cout: usize,
    x: &[f64],
    weight: &[f64],
    gy: &[f64],
    gx: Option<&mut [f64]>,
    gw: &mut [f64],
    gb: Option<&mut [f64]>,
) {
    if let Some(gb) = gb {
        for o in 0..cout {
            gb[o] += gy[o];
        }
    }
    let mut gx = gx;
    for o in 0..cout {
        axpy(&mut gw[o * cin..(o + 1) * cin], gy[o], x);
        if let Some(gx) = gx.as_deref_mut() {
            axpy(gx, gy[o], &weight[o * cin..(o + 1) * cin]);
        }
    }
}
