fn main() {
    std::process::exit(coupon_alloc::cli::run(std::env::args_os()));
}
