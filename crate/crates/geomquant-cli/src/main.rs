fn main() {
    println!("geomquant");
}
