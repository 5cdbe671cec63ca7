//! Independent power-flow oracle: Z-bus fixed point on the full nodal
//! admittance matrix, V = V_noload − Z·conj(S / V).

use dlc_core::netmodel::Network;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub fn solve(
    net: &Network,
    s_load: &[[Complex64; 3]],
    tol: f64,
    max_iter: usize,
) -> Vec<[Complex64; 3]> {
    let zero = Complex64::new(0.0, 0.0);
    // node numbering over present phases of non-slack buses
    let mut node = vec![[None; 3]; net.buses.len()];
    let mut count = 0;
    for (b, bus) in net.buses.iter().enumerate().skip(1) {
        for ph in 0..3 {
            if bus.phases[ph] {
                node[b][ph] = Some(count);
                count += 1;
            }
        }
    }
    let slack: [Complex64; 3] =
        [0.0, -120.0, 120.0].map(|d: f64| Complex64::from_polar(net.v_ref, d.to_radians()));
    let mut y = DMatrix::<Complex64>::zeros(count, count);
    let mut y_src = DVector::<Complex64>::zeros(count);
    for line in &net.lines {
        let phs: Vec<usize> = (0..3).filter(|&ph| net.buses[line.to].phases[ph]).collect();
        let z = line.z();
        let zs = DMatrix::from_fn(phs.len(), phs.len(), |i, j| z[(phs[i], phs[j])]);
        let ys = zs.try_inverse().expect("singular line impedance");
        for (i, &pi) in phs.iter().enumerate() {
            for (j, &pj) in phs.iter().enumerate() {
                let yij = ys[(i, j)];
                let ti = node[line.to][pi].unwrap();
                let tj = node[line.to][pj].unwrap();
                y[(ti, tj)] += yij;
                match (node[line.from][pi], node[line.from][pj]) {
                    (Some(fi), Some(fj)) => {
                        y[(fi, fj)] += yij;
                        y[(fi, tj)] -= yij;
                        y[(ti, fj)] -= yij;
                    }
                    _ => {
                        // from bus is the slack
                        y_src[ti] += yij * slack[pj];
                    }
                }
            }
        }
    }
    let zbus = y.try_inverse().expect("singular admittance");
    let v_noload = &zbus * &y_src;
    let mut v = v_noload.clone();
    for _ in 0..max_iter {
        let mut i_load = DVector::<Complex64>::zeros(count);
        for (b, nodes) in node.iter().enumerate() {
            for ph in 0..3 {
                if let Some(k) = nodes[ph] {
                    i_load[k] = (s_load[b][ph] / v[k]).conj();
                }
            }
        }
        let next = &v_noload - &zbus * i_load;
        let dv = (&next - &v).iter().map(|c| c.norm()).fold(0.0, f64::max);
        v = next;
        if dv < tol {
            break;
        }
    }
    let mut out = vec![[zero; 3]; net.buses.len()];
    out[0] = slack;
    for (b, nodes) in node.iter().enumerate() {
        for ph in 0..3 {
            if let Some(k) = nodes[ph] {
                out[b][ph] = v[k];
            }
        }
    }
    out
}
