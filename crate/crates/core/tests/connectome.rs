use std::collections::HashSet;

use anisonet::connectome::io::{read_connectome, write_connectome};
use anisonet::connectome::{build_network, out_degrees, torus_distance, wrap_delta, Network};
use anisonet::{NetworkConfig, NetworkKind};

fn net(kind: NetworkKind) -> (NetworkConfig, Network) {
    let cfg = NetworkConfig::default();
    let n = build_network(&cfg, kind).unwrap();
    (cfg, n)
}

#[test]
fn exact_degrees_and_no_duplicates() {
    for kind in [NetworkKind::Anisotropic, NetworkKind::Random] {
        let (cfg, n) = net(kind);
        let c = &n.connectome;
        assert_eq!((c.exc_count(), c.inh_count(), c.pool_count()), (3600, 900, 72));
        let (ke, ki) = out_degrees(&cfg.grid, cfg.connectivity.p_conn);
        assert_eq!((ke, ki), (180, 45));
        let mut per_source = vec![(0usize, 0usize); c.pool_offset()];
        let mut seen = HashSet::new();
        for e in c.recurrent_edges() {
            assert_ne!(e.source, e.target);
            assert!(seen.insert((e.source, e.target)), "{kind}: duplicate {e:?}");
            let slot = &mut per_source[e.source as usize];
            if (e.target as usize) < c.exc_count() {
                slot.0 += 1;
            } else {
                slot.1 += 1;
            }
            let exc_src = (e.source as usize) < c.exc_count();
            assert_eq!(e.weight > 0, exc_src, "{kind}: sign of {e:?}");
            assert_eq!(e.delay, 1);
        }
        assert!(per_source.iter().all(|&d| d == (ke, ki)), "{kind}");
        assert!(c.edges.windows(2).all(|w| w[0].source <= w[1].source));
    }
}

#[test]
fn pooling_tiles_cover_sheet_twice() {
    let (cfg, n) = net(NetworkKind::Anisotropic);
    let c = &n.connectome;
    let mut fan_in = vec![0usize; c.pool_count()];
    let mut cover = vec![0usize; c.exc_count()];
    for e in c.pooling_edges() {
        assert!((e.source as usize) < c.exc_count());
        assert_eq!(e.weight, cfg.pooling.weight);
        fan_in[e.target as usize - c.pool_offset()] += 1;
        cover[e.source as usize] += 1;
    }
    assert!(fan_in.iter().all(|&f| f == 100));
    assert!(cover.iter().all(|&k| k == 2));
}

/// Circular mean target displacement of one excitatory source. A plain
/// mean is biased on the torus: tails past half the side fold back inward.
fn mean_displacement(n: &Network, src: usize) -> (f64, f64) {
    let c = &n.connectome;
    let side = c.grid.exc_side as f64;
    let p = c.grid.exc_point(src);
    let tau = std::f64::consts::TAU;
    let (mut sx, mut cx, mut sy, mut cy) = (0.0, 0.0, 0.0, 0.0);
    for e in c.recurrent_edges().filter(|e| e.source as usize == src && (e.target as usize) < c.exc_count()) {
        let q = c.grid.exc_point(e.target as usize);
        let ax = tau * wrap_delta(p.x as f64, q.x as f64, side) / side;
        let ay = tau * wrap_delta(p.y as f64, q.y as f64, side) / side;
        (sx, cx, sy, cy) = (sx + ax.sin(), cx + ax.cos(), sy + ay.sin(), cy + ay.cos());
    }
    (sx.atan2(cx) * side / tau, sy.atan2(cy) * side / tau)
}

#[test]
fn excitatory_targets_shift_along_landscape() {
    let (cfg, n) = net(NetworkKind::Anisotropic);
    let land = n.landscape.as_ref().unwrap();
    let (mut along, mut across) = (0.0, 0.0);
    let count = n.connectome.exc_count();
    for src in 0..count {
        let d = land.direction(src);
        let (dx, dy) = (d.dx as f64, d.dy as f64);
        let (mx, my) = mean_displacement(&n, src);
        let norm2 = dx * dx + dy * dy;
        along += (mx * dx + my * dy) / norm2;
        across += (-mx * dy + my * dx) / norm2;
    }
    let along = along / count as f64;
    let across = across / count as f64;
    let shift = cfg.connectivity.n_shift as f64;
    assert!((along - shift).abs() < 0.1, "along {along}");
    assert!(across.abs() < 0.1, "across {across}");
}

#[test]
fn random_control_is_not_local() {
    let (_, aniso) = net(NetworkKind::Anisotropic);
    let (_, random) = net(NetworkKind::Random);
    let mean_dist = |n: &Network| {
        let c = &n.connectome;
        let (mut s, mut k) = (0.0, 0.0);
        for e in c.recurrent_edges().filter(|e| (e.source as usize) < c.exc_count() && (e.target as usize) < c.exc_count()) {
            s += torus_distance(c.grid.exc_point(e.source as usize), c.grid.exc_point(e.target as usize), c.grid.exc_side);
            k += 1.0;
        }
        s / k
    };
    let (a, r) = (mean_dist(&aniso), mean_dist(&random));
    // Rayleigh mean sigma*sqrt(pi/2) for sigma 12, and the uniform-torus mean for side 60
    assert!((a - 15.0).abs() < 1.5, "aniso {a}");
    assert!((r - 22.96).abs() < 0.5, "random {r}");
    assert!(random.landscape.is_none());
    assert_eq!(random.connectome.input_patch, aniso.connectome.input_patch);
}

#[test]
fn builds_are_reproducible() {
    let (cfg, a) = net(NetworkKind::Anisotropic);
    let (_, b) = net(NetworkKind::Anisotropic);
    assert_eq!(a.connectome.digest(), b.connectome.digest());
    let mut other = cfg;
    other.seeds.connections += 1;
    let c = build_network(&other, NetworkKind::Anisotropic).unwrap();
    assert_ne!(a.connectome.digest(), c.connectome.digest());
    assert_eq!(a.landscape, c.landscape);
}

#[test]
fn landscape_is_balanced_and_smooth() {
    let (_, n) = net(NetworkKind::Anisotropic);
    let land = n.landscape.unwrap();
    assert_eq!(land.histogram(), [450; 8]);
    let g = n.connectome.grid;
    let side = g.exc_side;
    let mut cos = 0.0;
    for i in 0..g.exc_count() {
        let p = g.exc_point(i);
        let right = p.y * side + (p.x + 1) % side;
        cos += land.direction(i).cosine(land.direction(right));
    }
    let cos = cos / g.exc_count() as f64;
    assert!(cos > 0.6, "neighbour cosine {cos}");
}

#[test]
fn connectome_file_round_trip() {
    let (cfg, n) = net(NetworkKind::Random);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    write_connectome(&path, &n.connectome, &cfg).unwrap();
    let (cfg2, c2) = read_connectome(&path).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(c2, n.connectome);
}
