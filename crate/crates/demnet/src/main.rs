fn main() {
    // Piping into `head` closes stdout early; exit quietly like other
    // line-oriented tools instead of panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(demnet::cli::run());
}
