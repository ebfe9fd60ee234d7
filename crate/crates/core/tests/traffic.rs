mod common;

use common::data_file;
use eonplan::topology::{generate_traffic, load_topology, read_traffic_csv, write_traffic_csv};
use eonplan::Topology;
use proptest::prelude::*;

fn nkn() -> Topology {
    load_topology(data_file("nkn31.json")).unwrap()
}

#[test]
fn nkn_reconstruction_shape() {
    let t = nkn();
    assert_eq!(t.num_nodes(), 31);
    assert_eq!(t.num_fibers(), 81);
    let ctx = common::context(t);
    assert_eq!(ctx.oxc_total(), 26520.0);
}

#[test]
fn nkn_mean_rate_tracks_the_atd() {
    let t = nkn();
    for atd in [10.0, 40.0, 100.0] {
        let mut sum = 0.0;
        let mut count = 0usize;
        for seed in 0..10 {
            let d = generate_traffic(&t, atd, seed).unwrap();
            assert_eq!(d.len(), 31 * 30);
            sum += d.iter().map(|x| x.rate_gbps).sum::<f64>();
            count += d.len();
        }
        let mean = sum / count as f64;
        assert!((mean - atd).abs() <= 0.05 * atd, "atd {atd} mean {mean}");
    }
}

#[test]
fn traffic_is_deterministic_per_seed() {
    let t = nkn();
    assert_eq!(generate_traffic(&t, 40.0, 9).unwrap(), generate_traffic(&t, 40.0, 9).unwrap());
    assert_ne!(generate_traffic(&t, 40.0, 9).unwrap(), generate_traffic(&t, 40.0, 10).unwrap());
    assert!(generate_traffic(&t, 4.0, 1).is_err());
}

#[test]
fn topology_json_round_trips() {
    let t = nkn();
    let back = Topology::from_json_str(&t.to_json_string()).unwrap();
    assert_eq!(back.to_json_string(), t.to_json_string());
    let chain = load_topology(data_file("chain3.json")).unwrap();
    assert_eq!(chain.num_nodes(), 3);
}

#[test]
fn traffic_csv_rejects_bad_rows() {
    assert!(read_traffic_csv("src,dst,gbps\n0,0,10\n".as_bytes(), 3).is_err());
    assert!(read_traffic_csv("src,dst,gbps\n0,5,10\n".as_bytes(), 3).is_err());
    assert!(read_traffic_csv("src,dst,gbps\n0,1,-1\n".as_bytes(), 3).is_err());
    assert!(read_traffic_csv("src,dst,gbps\n0,1,10\n0,1,20\n".as_bytes(), 3).is_err());
    let d = read_traffic_csv("# comment\nsrc,dst,gbps\n2,1,7\n0,1,0\n1,0,3\n".as_bytes(), 3).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!((d[0].demand_id, d[0].src, d[0].dst, d[0].rate_gbps), (0, 1, 0, 3.0));
    assert_eq!((d[1].demand_id, d[1].src, d[1].dst), (1, 2, 1));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn generated_matrix_shape(n in 2usize..9, atd in 5u32..200, seed in any::<u64>()) {
        let edges: Vec<(usize, usize, f64)> = (1..n).map(|v| (v - 1, v, 100.0)).collect();
        let t = Topology::from_edges(n, &edges, 80.0, 16).unwrap();
        let d = generate_traffic(&t, atd as f64, seed).unwrap();
        prop_assert_eq!(d.len(), n * (n - 1));
        let hi = (2 * atd).saturating_sub(5).max(5) as f64;
        let mut pairs = Vec::new();
        for (i, x) in d.iter().enumerate() {
            prop_assert_eq!(x.demand_id, i);
            prop_assert!(x.src != x.dst);
            prop_assert!(x.rate_gbps >= 5.0 && x.rate_gbps <= hi);
            prop_assert_eq!(x.rate_gbps.fract(), 0.0);
            pairs.push((x.src, x.dst));
        }
        let mut sorted = pairs.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted, pairs);

        let mut buf = Vec::new();
        write_traffic_csv(&mut buf, &d).unwrap();
        prop_assert_eq!(read_traffic_csv(buf.as_slice(), n).unwrap(), d);
    }
}
