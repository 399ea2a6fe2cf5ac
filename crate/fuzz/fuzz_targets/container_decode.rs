#![no_main]

use libfuzzer_sys::fuzz_target;
use wedgefield::container::MatrixContainer;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = MatrixContainer::decode(data) {
        let again = MatrixContainer::decode(&c.encode()).expect("re-encoded container decodes");
        assert_eq!(again.rows, c.rows);
        assert_eq!(again.cols, c.cols);
        assert_eq!(again.data.len(), c.data.len());
    }
});
