#ifndef IMGBUF_H
#define IMGBUF_H

#include <stddef.h>

typedef struct img_frame {
    unsigned char *contents;
    unsigned char *plt_data;
    size_t size;
    int flags;
    unsigned int checksum;
    struct img_frame *next;
} img_frame;

typedef struct img_state {
    img_frame *frame;
    int mode;
    unsigned long reserved[4];
} img_state;

unsigned int img_checksum(const unsigned char *data, size_t n);
void img_state_reset(img_state *st);
int img_frame_alloc(img_state *st, size_t n);
int img_apply_frame(img_state *st);

#endif
