#include <stdlib.h>

#include "buf.h"

int g_count = 0;

char *copy_name(const char *src, size_t len)
{
    char *buf = malloc(NAME_CAP);
    size_t i;

    if (buf == NULL)
        return NULL;
    if (len > NAME_CAP)
        len = NAME_CAP;
    for (i = 0; i <= len; i++) {
        buf[i] = src[i];
    }
    g_count++;
    return buf;
}
