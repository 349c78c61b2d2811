#include <stdio.h>
#include <stdlib.h>

#include "buf.h"
#include "util.h"

int main(int argc, char **argv)
{
    char line[256];
    char *name;
    FILE *fp;
    size_t len;

    if (argc < 2) {
        fprintf(stderr, "usage: %s <name-file>\n", argv[0]);
        return 2;
    }
    fp = fopen(argv[1], "r");
    if (fp == NULL) {
        perror("fopen");
        return 2;
    }
    if (fgets(line, sizeof(line), fp) == NULL) {
        fclose(fp);
        return 2;
    }
    fclose(fp);
    len = trim_newline(line);
    name = copy_name(line, len);
    if (name == NULL)
        return 1;
    printf("name: %.*s (copies: %d)\n", NAME_CAP, name, g_count);
    free(name);
    return 0;
}
