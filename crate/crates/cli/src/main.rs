fn main() {
    println!("fphand");
}
