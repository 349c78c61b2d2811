#ifndef BUF_H
#define BUF_H

#include <stddef.h>

#define NAME_CAP 16

extern int g_count;

char *copy_name(const char *src, size_t len);

#endif
