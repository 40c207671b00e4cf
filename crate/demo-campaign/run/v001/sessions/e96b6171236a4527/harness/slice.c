/* self-contained slice: img_apply_frame plus stubs for everything off-path */
#include <stddef.h>
#include <string.h>

extern void klee_assert(int condition);

typedef struct img_frame_s {
    unsigned char *contents;
    unsigned char *plt_data;
    size_t size;
} img_frame;

typedef struct img_state_s {
    img_frame *frame;
} img_state;

/* function-level stub: the checksum does not influence the path */
static unsigned int img_checksum_stub(const unsigned char *data, size_t n)
{
    (void)data;
    (void)n;
    return 0;
}

int img_apply_frame(img_state *st)
{
    if (st->frame != NULL
        && st->frame->contents != NULL)
    {
        memcpy(st->frame->contents,
               st->frame->plt_data,
               st->frame->size);
        klee_assert(0); /* reachability */
        st->frame->contents[0] = (unsigned char)img_checksum_stub(st->frame->contents, 1);
        return 0;
    }
    return -1;
}
