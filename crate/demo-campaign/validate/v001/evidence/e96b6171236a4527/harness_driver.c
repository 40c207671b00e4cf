#include <stdlib.h>
#include <string.h>

#include "imgbuf.h"

extern void klee_make_symbolic(void *addr, unsigned long nbytes, const char *name);
extern void klee_assume(unsigned long condition);

int main(void)
{
    img_state *st = calloc(1, sizeof(img_state));
    st->frame = calloc(1, sizeof(img_frame));
    unsigned char *dst = malloc(16);
    klee_make_symbolic(dst, 16, "dst_bytes");
    st->frame->contents = dst;
    unsigned char *src = malloc(512);
    klee_make_symbolic(src, 512, "src_bytes");
    st->frame->plt_data = src;
    size_t sz;
    klee_make_symbolic(&sz, sizeof(sz), "copy_size");
    klee_assume(sz > 16);
    klee_assume(sz <= 512);
    st->frame->size = sz;
    img_apply_frame(st);
    return 0;
}
