//! Holds the `acceptance` test target, which checks the whole workspace
//! against its acceptance criteria. The library itself is empty.
