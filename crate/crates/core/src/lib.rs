pub mod entropy;
pub mod grammar;
pub mod hpac;
pub mod ids;
pub mod metrics;
pub mod proto;
pub mod seed;
pub mod sim;

#[cfg(doctest)]
mod book {
    macro_rules! chapters {
        ($($name:ident),*) => {
            $(
                #[doc = include_str!(concat!("../../../book/src/", stringify!($name), ".md"))]
                mod $name {}
            )*
        };
    }
    chapters!(introduction, actions, chunking, horizon, simulator, datasets, metrics, protocol, cli);
}
