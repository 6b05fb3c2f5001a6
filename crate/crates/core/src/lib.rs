pub mod bench;
pub mod crf;
pub mod encode;
pub mod fv;
pub mod nb;
pub mod ring;

// Keeps the guide's snippets compiling and passing.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub struct $name;
        };
    }
    chapter!(Introduction, "introduction.md");
    chapter!(Scheme, "scheme.md");
    chapter!(Encoding, "encoding.md");
    chapter!(Forests, "forests.md");
    chapter!(NaiveBayes, "naive-bayes.md");
    chapter!(Experiments, "experiments.md");
    chapter!(Formats, "formats.md");
}
