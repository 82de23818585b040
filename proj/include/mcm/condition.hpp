#pragma once

namespace mcm {

// Class-conditioning token. Negative id is the distinguished unconditional
// (NULL) token used for classifier-free guidance; it is never a valid class.
struct Condition {
    long class_id = -1;

    bool is_null() const { return class_id < 0; }
    static Condition null_cond() { return Condition{-1}; }
    static Condition of(long k) { return Condition{k}; }
};

}  // namespace mcm
