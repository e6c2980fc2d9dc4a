fn main() {
    println!("geoblock");
}
