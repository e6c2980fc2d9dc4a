use geoblock::chart::ChartPoint;
use geoblock::connector::*;
use geoblock::metric::MetricField;

fn main() {
    let g = MetricField::flat();
    let x = ChartPoint::new(0.0, 0.0);
    let y = ChartPoint::new(0.5, 0.5);
    let found = find_geodesics(&g, &x, &y, 2.0, &SweepConfig::default()).unwrap();
    let oracle = flat_torus_oracle(&x, &y, 2.0);
    println!("found {} oracle {}", found.len(), oracle.len());
    for (f, o) in found.connections.iter().zip(&oracle.connections) {
        println!(
            "len {:.9} vs {:.9} | th {:.9} vs {:.9} | deg {} | err {:.2e}",
            f.length, o.length, f.theta0, o.theta0, f.degree, f.endpoint_error
        );
    }
    println!("degenerate: {}", found.degenerate.len());
    for d in &found.degenerate {
        println!("  deg len {:.9} th {:.9} deg {} err {:.2e}", d.length, d.theta0, d.degree, d.endpoint_error);
    }
}
